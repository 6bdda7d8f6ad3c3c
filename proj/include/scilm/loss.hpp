#pragma once

#include <cmath>
#include <vector>

#include "scilm/matrix.hpp"
#include "scilm/model.hpp"
#include "scilm/tape.hpp"

namespace scilm {

// Per-batch loss components. total = lambda_q * l1 + (1 - lambda_q) * l3
// - beta * l2 + lambda_reg * reg; l2 enters with a minus sign because the
// latent cosine match is maximized.
struct LossBreakdown {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

namespace detail {
inline double cosine_floored(const Matrix& u, const Matrix& v, bool squared_norm) {
  double nu = squared_norm ? sum_sq(u) : norm2(u);
  double nv = squared_norm ? sum_sq(v) : norm2(v);
  if (nu < Tape::kCosineNormFloor) nu = Tape::kCosineNormFloor;
  if (nv < Tape::kCosineNormFloor) nv = Tape::kCosineNormFloor;
  return dot(u, v) / (nu * nv);
}
}  // namespace detail

// Mean squared distance between each embedded semantic prototype and the
// variant-selected visual prototype.
inline double loss_l1(const PrototypeSet& protos, Variant variant) {
  double sum = 0.0;
  for (std::size_t i = 0; i < protos.classes.size(); ++i)
    sum += sq_dist(protos.classes[i].semantic, protos.target(i, variant));
  return sum / static_cast<double>(protos.classes.size());
}

// Mean latent cosine similarity between the two modality prototypes, both
// embedded through the shared layer. Maximized (subtracted from the total).
inline double loss_l2(const PrototypeSet& protos, const SharedParams& shared, Variant variant,
                      bool squared_norm_cosine = false) {
  double sum = 0.0;
  for (std::size_t i = 0; i < protos.classes.size(); ++i) {
    const Matrix lhs = shared_embed(protos.classes[i].semantic, shared);
    const Matrix rhs = shared_embed(protos.target(i, variant), shared);
    sum += detail::cosine_floored(lhs, rhs, squared_norm_cosine);
  }
  return sum / static_cast<double>(protos.classes.size());
}

// Hinge separation over all ordered class pairs: matching pairs pay their
// squared distance, mismatching pairs pay max(gamma - distance^2, 0).
// Averaged over all k^2 pairs.
inline double loss_l3(const PrototypeSet& protos, double gamma, Variant variant) {
  const std::size_t k = protos.classes.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double d = sq_dist(protos.classes[i].semantic, protos.target(j, variant));
      sum += i == j ? d : std::max(gamma - d, 0.0);
    }
  return sum / static_cast<double>(k * k);
}

inline double params_sq_norm(const SenParams& sen, const SharedParams& shared) {
  return sum_sq(sen.w1) + sum_sq(sen.b1) + sum_sq(sen.w2) + sum_sq(sen.b2) + sum_sq(shared.ws) +
         sum_sq(shared.bs);
}

inline LossBreakdown total_loss(const PrototypeSet& protos, const SenParams& sen,
                                const SharedParams& shared, const ModelConfig& config) {
  LossBreakdown lb;
  lb.l1 = loss_l1(protos, config.variant);
  lb.l2 = loss_l2(protos, shared, config.variant, config.squared_norm_cosine);
  lb.l3 = loss_l3(protos, config.gamma, config.variant);
  lb.reg = params_sq_norm(sen, shared);
  lb.total = config.lambda_q * lb.l1 + (1.0 - config.lambda_q) * lb.l3 - config.beta * lb.l2 +
             config.lambda_reg * lb.reg;
  return lb;
}

// ---------------------------------------------------------------------------
// Tape construction of the same objective, differentiable end to end
// (including through the attention weights into the embedding parameters).

struct LossNodes {
  NodeId l1 = -1, l2 = -1, l3 = -1, reg = -1, total = -1;
};

inline LossNodes build_loss_nodes(Tape& tape, const std::vector<ClassPrototypeNodes>& protos,
                                  const ParamNodes& pn, const ModelConfig& config) {
  if (protos.empty()) throw ContractViolation("build_loss_nodes: empty prototype set");
  const std::size_t k = protos.size();
  LossNodes ln;

  std::vector<NodeId> match_terms;
  match_terms.reserve(k);
  for (const ClassPrototypeNodes& cp : protos)
    match_terms.push_back(tape.sq_dist(cp.semantic, cp.target));
  ln.l1 = tape.mean_scalars(match_terms);

  std::vector<NodeId> latent_terms;
  latent_terms.reserve(k);
  for (const ClassPrototypeNodes& cp : protos) {
    const NodeId lhs = shared_embed_node(tape, pn, cp.semantic);
    const NodeId rhs = shared_embed_node(tape, pn, cp.target);
    latent_terms.push_back(config.squared_norm_cosine ? tape.cosine_sim_sqnorm(lhs, rhs)
                                                      : tape.cosine_sim(lhs, rhs));
  }
  ln.l2 = tape.mean_scalars(latent_terms);

  std::vector<NodeId> pair_terms;
  pair_terms.reserve(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const NodeId d = tape.sq_dist(protos[i].semantic, protos[j].target);
      pair_terms.push_back(i == j ? d : tape.hinge_from_sq(d, config.gamma));
    }
  ln.l3 = tape.mean_scalars(pair_terms);

  ln.reg = tape.lin_comb({tape.sum_sq(pn.w1), tape.sum_sq(pn.b1), tape.sum_sq(pn.w2),
                          tape.sum_sq(pn.b2), tape.sum_sq(pn.ws), tape.sum_sq(pn.bs)},
                         {1.0, 1.0, 1.0, 1.0, 1.0, 1.0});

  ln.total = tape.lin_comb({ln.l1, ln.l3, ln.l2, ln.reg},
                           {config.lambda_q, 1.0 - config.lambda_q, -config.beta,
                            config.lambda_reg});
  return ln;
}

inline LossBreakdown read_loss_values(const Tape& tape, const LossNodes& ln) {
  LossBreakdown lb;
  lb.l1 = tape.scalar_value(ln.l1);
  lb.l2 = tape.scalar_value(ln.l2);
  lb.l3 = tape.scalar_value(ln.l3);
  lb.reg = tape.scalar_value(ln.reg);
  lb.total = tape.scalar_value(ln.total);
  return lb;
}

}  // namespace scilm
