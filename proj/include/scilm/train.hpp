#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "scilm/dataset.hpp"
#include "scilm/loss.hpp"
#include "scilm/model.hpp"
#include "scilm/sampler.hpp"
#include "scilm/tape.hpp"

namespace scilm {

// First-order optimizer state; for adam the moment accumulators mirror the
// parameter shapes. beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class OptimizerState {
 public:
  OptimizerState(OptimizerKind kind, double learning_rate)
      : kind_(kind), learning_rate_(learning_rate) {}

  void attach(const std::vector<Matrix*>& params) {
    first_moment_.clear();
    second_moment_.clear();
    step_count_ = 0;
    for (const Matrix* p : params) {
      first_moment_.emplace_back(p->rows(), p->cols());
      second_moment_.emplace_back(p->rows(), p->cols());
    }
  }

  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
    if (params.size() != grads.size() || params.size() != first_moment_.size())
      throw ContractViolation("OptimizerState::step: parameter/gradient count mismatch");
    ++step_count_;
    for (std::size_t t = 0; t < params.size(); ++t) {
      Matrix& p = *params[t];
      const Matrix& g = *grads[t];
      if (!p.same_shape(g))
        throw ContractViolation("OptimizerState::step: gradient shape mismatch at tensor " +
                                std::to_string(t));
      if (kind_ == OptimizerKind::kSgd) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate_ * g[i];
        continue;
      }
      Matrix& m = first_moment_[t];
      Matrix& v = second_moment_[t];
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_count_));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_count_));
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + kEps);
      }
    }
  }

  std::size_t step_count() const { return step_count_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  OptimizerKind kind_;
  double learning_rate_;
  std::size_t step_count_ = 0;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
};

struct PhaseTimes {
  double sample_s = 0.0;
  double forward_s = 0.0;
  double backward_s = 0.0;
  double update_s = 0.0;
};

struct TrainReport {
  std::vector<LossBreakdown> losses;  // one entry per iteration run
  std::vector<int> degenerate_cosine_counts;
  PhaseTimes phase_times;
  std::size_t iterations = 0;

  int total_degenerate_cosine() const {
    int total = 0;
    for (int c : degenerate_cosine_counts) total += c;
    return total;
  }
};

struct TrainResult {
  SenParams sen;
  SharedParams shared;
  TrainReport report;
};

// Observation hook for tests and tooling; called after each update.
using TrainObserver = std::function<void(std::size_t iteration, const BalancedBatch& batch,
                                         const LossBreakdown& losses)>;

namespace detail {

inline void check_dims(const ModelConfig& config, const Dataset& ds) {
  if (config.q != ds.attribute_dim())
    throw ConfigError("config: q = " + std::to_string(config.q) + " but dataset attributes have " +
                      std::to_string(ds.attribute_dim()) + " dimensions");
  if (config.p != ds.feature_dim())
    throw ConfigError("config: p = " + std::to_string(config.p) + " but dataset features have " +
                      std::to_string(ds.feature_dim()) + " dimensions");
}

inline void check_finite(const LossBreakdown& lb, std::size_t iteration) {
  const struct {
    const char* name;
    double value;
  } parts[] = {{"l1", lb.l1}, {"l2", lb.l2}, {"l3", lb.l3}, {"reg", lb.reg}, {"total", lb.total}};
  for (const auto& part : parts)
    if (!std::isfinite(part.value))
      throw NumericalError("training aborted: component " + std::string(part.name) +
                           " non-finite at iteration " + std::to_string(iteration));
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Balanced-batch training of the full objective. Each iteration samples n
// instances from every seen class, builds the prototypes, differentiates the
// loss and applies one optimizer update to both parameter groups.
// Deterministic given (dataset, config, rng seed).
inline TrainResult train(const Dataset& ds, const ModelConfig& config, Rng& rng,
                         const TrainObserver& observer = nullptr) {
  validate_config(config);
  detail::check_dims(config, ds);
  auto [sen, shared] = init_params(config, rng);
  const auto by_class = train_indices_by_class(ds);

  OptimizerState opt(config.optimizer, config.learning_rate);
  std::vector<Matrix*> params = {&sen.w1, &sen.b1, &sen.w2, &sen.b2, &shared.ws, &shared.bs};
  opt.attach(params);

  TrainReport report;
  report.losses.reserve(config.iterations);
  using clock = std::chrono::steady_clock;
  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    auto t0 = clock::now();
    const BalancedBatch batch = sample_balanced_batch(ds, by_class, config.n, rng);
    report.phase_times.sample_s += detail::seconds_since(t0);

    t0 = clock::now();
    Tape tape;
    const ParamNodes pn = register_params(tape, sen, shared);
    const auto protos =
        build_prototype_nodes(tape, batch, ds, pn, config.variant, config.lambda_p);
    const LossNodes ln = build_loss_nodes(tape, protos, pn, config);
    const LossBreakdown lb = read_loss_values(tape, ln);
    report.phase_times.forward_s += detail::seconds_since(t0);
    detail::check_finite(lb, iter);

    t0 = clock::now();
    tape.backward(ln.total);
    report.phase_times.backward_s += detail::seconds_since(t0);

    t0 = clock::now();
    const std::vector<const Matrix*> grads = {&tape.grad(pn.w1), &tape.grad(pn.b1),
                                              &tape.grad(pn.w2), &tape.grad(pn.b2),
                                              &tape.grad(pn.ws), &tape.grad(pn.bs)};
    opt.step(params, grads);
    report.phase_times.update_s += detail::seconds_since(t0);

    report.losses.push_back(lb);
    report.degenerate_cosine_counts.push_back(tape.degenerate_cosine_count());
    ++report.iterations;
    if (observer) observer(iter, batch, lb);
  }
  return {std::move(sen), std::move(shared), std::move(report)};
}

// Conventional-baseline training: same embedding network, but each iteration
// draws a uniform instance batch of size k*n from all training data and
// regresses the embedded class semantics onto the raw instance features.
// No attention, no latent or separation terms.
inline TrainResult train_baseline_dem(const Dataset& ds, const ModelConfig& config, Rng& rng,
                                      const TrainObserver& observer = nullptr) {
  validate_config(config);
  detail::check_dims(config, ds);
  auto [sen, shared] = init_params(config, rng);
  const std::size_t batch_size = ds.seen_classes.size() * config.n;

  OptimizerState opt(config.optimizer, config.learning_rate);
  std::vector<Matrix*> params = {&sen.w1, &sen.b1, &sen.w2, &sen.b2};
  opt.attach(params);

  TrainReport report;
  report.losses.reserve(config.iterations);
  using clock = std::chrono::steady_clock;
  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    auto t0 = clock::now();
    const std::vector<std::size_t> instances = sample_uniform_batch(ds, batch_size, rng);
    report.phase_times.sample_s += detail::seconds_since(t0);

    t0 = clock::now();
    Tape tape;
    ParamNodes pn;
    pn.w1 = tape.leaf(sen.w1, true);
    pn.b1 = tape.leaf(sen.b1, true);
    pn.w2 = tape.leaf(sen.w2, true);
    pn.b2 = tape.leaf(sen.b2, true);

    std::unordered_map<int, NodeId> embedded;  // one embedding per class in the batch
    std::vector<NodeId> terms;
    terms.reserve(instances.size());
    for (std::size_t ix : instances) {
      const int label = ds.labels[ix];
      auto it = embedded.find(label);
      if (it == embedded.end()) {
        const NodeId attr = tape.constant(ds.attributes.row_as_column(label));
        it = embedded.emplace(label, sen_forward_node(tape, pn, attr)).first;
      }
      terms.push_back(tape.sq_dist(it->second, tape.constant(ds.features.row_as_column(ix))));
    }
    const NodeId data_term = tape.mean_scalars(terms);
    const NodeId reg = tape.lin_comb({tape.sum_sq(pn.w1), tape.sum_sq(pn.b1), tape.sum_sq(pn.w2),
                                      tape.sum_sq(pn.b2)},
                                     {1.0, 1.0, 1.0, 1.0});
    const NodeId total = tape.lin_comb({data_term, reg}, {1.0, config.lambda_reg});

    LossBreakdown lb;
    lb.l1 = tape.scalar_value(data_term);
    lb.reg = tape.scalar_value(reg);
    lb.total = tape.scalar_value(total);
    report.phase_times.forward_s += detail::seconds_since(t0);
    detail::check_finite(lb, iter);

    t0 = clock::now();
    tape.backward(total);
    report.phase_times.backward_s += detail::seconds_since(t0);

    t0 = clock::now();
    const std::vector<const Matrix*> grads = {&tape.grad(pn.w1), &tape.grad(pn.b1),
                                              &tape.grad(pn.w2), &tape.grad(pn.b2)};
    opt.step(params, grads);
    report.phase_times.update_s += detail::seconds_since(t0);

    report.losses.push_back(lb);
    report.degenerate_cosine_counts.push_back(0);
    ++report.iterations;
    if (observer) observer(iter, BalancedBatch{}, lb);
  }
  return {std::move(sen), std::move(shared), std::move(report)};
}

// ---------------------------------------------------------------------------
// Gradient check: analytic backward vs central finite differences on one
// synthetic balanced batch.

struct GradcheckEntry {
  std::string name;
  Matrix analytic;
  Matrix numeric;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
};

// A self-contained problem for the gradient check: k seen classes with unit
// attribute vectors and n nonnegative feature rows each.
inline std::pair<Dataset, BalancedBatch> make_gradcheck_problem(const ModelConfig& config,
                                                                std::size_t k, Rng& rng) {
  Dataset ds;
  ds.attributes = Matrix(k, config.q);
  for (std::size_t c = 0; c < k; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < config.q; ++j) {
      ds.attributes(c, j) = rng.normal();
      norm += ds.attributes(c, j) * ds.attributes(c, j);
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < config.q; ++j) ds.attributes(c, j) /= norm;
  }
  ds.features = Matrix(k * config.n, config.p);
  for (std::size_t i = 0; i < ds.features.size(); ++i) ds.features[i] = std::fabs(rng.normal());
  BalancedBatch batch;
  batch.samples_per_class = config.n;
  for (std::size_t c = 0; c < k; ++c) {
    ds.seen_classes.push_back(static_cast<int>(c));
    batch.class_ids.push_back(static_cast<int>(c));
    std::vector<std::size_t> picks;
    for (std::size_t j = 0; j < config.n; ++j) {
      const std::size_t ix = c * config.n + j;
      ds.labels.push_back(static_cast<int>(c));
      ds.train_idx.push_back(ix);
      picks.push_back(ix);
    }
    batch.per_class_indices.push_back(std::move(picks));
  }
  return {std::move(ds), std::move(batch)};
}

// Central differences are only valid away from the objective's piecewise
// boundaries (ReLU kinks, the hinge margin, zero-norm cosine inputs), so
// problems that land within a safety margin of one are redrawn from the
// continuing stream.
inline GradcheckReport gradcheck(const ModelConfig& config, std::size_t k, Rng& rng,
                                 double eps = 1e-5) {
  validate_config(config);
  Dataset ds;
  BalancedBatch batch;
  SenParams sen;
  SharedParams shared;
  Tape tape;
  ParamNodes pn;
  LossNodes ln;
  for (int attempt = 0;; ++attempt) {
    auto problem = make_gradcheck_problem(config, k, rng);
    auto params = init_params(config, rng);
    Tape candidate;
    const ParamNodes nodes = register_params(candidate, params.first, params.second);
    const auto protos = build_prototype_nodes(candidate, problem.second, problem.first, nodes,
                                              config.variant, config.lambda_p);
    const LossNodes losses = build_loss_nodes(candidate, protos, nodes, config);
    const Tape::KinkReport kr = candidate.kink_report();
    if (kr.relu_gap > 1e-4 && kr.hinge_gap > 1e-3 && kr.cosine_norm > 1e-2) {
      ds = std::move(problem.first);
      batch = std::move(problem.second);
      sen = std::move(params.first);
      shared = std::move(params.second);
      tape = std::move(candidate);
      pn = nodes;
      ln = losses;
      break;
    }
    if (attempt >= 200)
      throw NumericalError("gradcheck: no boundary-free probe point found in 200 draws");
  }
  tape.backward(ln.total);
  const std::vector<std::pair<std::string, NodeId>> named = {
      {"w1", pn.w1}, {"b1", pn.b1}, {"w2", pn.w2}, {"b2", pn.b2}, {"ws", pn.ws}, {"bs", pn.bs}};

  // Finite differences probe the plain evaluation path, so the check also
  // covers tape-forward vs plain-forward agreement.
  const auto objective = [&](const std::vector<Matrix>& p) {
    SenParams s{p[0], p[1], p[2], p[3]};
    SharedParams sh{p[4], p[5]};
    const PrototypeSet prot = build_prototypes(batch, ds, s, config.lambda_p);
    return total_loss(prot, s, sh, config).total;
  };
  const std::vector<Matrix> flat = {sen.w1, sen.b1, sen.w2, sen.b2, shared.ws, shared.bs};
  const std::vector<Matrix> numeric = finite_difference_gradient(objective, flat, eps);

  GradcheckReport report;
  for (std::size_t t = 0; t < named.size(); ++t) {
    GradcheckEntry entry;
    entry.name = named[t].first;
    entry.analytic = tape.grad(named[t].second);
    entry.numeric = numeric[t];
    for (std::size_t i = 0; i < entry.analytic.size(); ++i)
      entry.max_rel_error =
          std::max(entry.max_rel_error, relative_error(entry.analytic[i], entry.numeric[i]));
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

inline void write_loss_curve(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os << "iter,l1,l2,l3,reg,total\n";
  char buf[160];
  for (std::size_t i = 0; i < report.losses.size(); ++i) {
    const LossBreakdown& lb = report.losses[i];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i + 1, lb.l1, lb.l2,
                  lb.l3, lb.reg, lb.total);
    os << buf;
  }
  if (!os) throw DataError(path.string() + ": write failed");
}

}  // namespace scilm
