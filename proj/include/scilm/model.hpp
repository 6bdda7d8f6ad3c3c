#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scilm/dataset.hpp"
#include "scilm/error.hpp"
#include "scilm/matrix.hpp"
#include "scilm/rng.hpp"
#include "scilm/sampler.hpp"
#include "scilm/tape.hpp"

namespace scilm {

// Which class visual prototype the losses train against: the plain average,
// the attention-weighted combination, or their fusion.
enum class Variant : std::uint8_t { kAverage = 0, kAttention = 1, kFused = 2 };

inline char variant_letter(Variant v) {
  switch (v) {
    case Variant::kAverage: return 'a';
    case Variant::kAttention: return 'b';
    case Variant::kFused: return 'c';
  }
  throw ContractViolation("variant_letter: invalid variant");
}

inline Variant variant_from_letter(char c) {
  switch (c) {
    case 'a': return Variant::kAverage;
    case 'b': return Variant::kAttention;
    case 'c': return Variant::kFused;
    default: throw ConfigError(std::string("variant: expected a, b or c, got '") + c + "'");
  }
}

enum class OptimizerKind { kSgd, kAdam };

struct ModelConfig {
  std::size_t q = 0;  // attribute dimensionality (from data)
  std::size_t p = 0;  // visual feature dimensionality (from data)
  std::size_t h = 1000;  // hidden width, shared by the embedding and latent layers
  std::size_t n = 10;    // samples per class per iteration
  double lambda_p = 0.4;   // fusion weight on the averaged prototype
  double lambda_q = 0.4;   // weight between the matching and separation losses
  double beta = 1.0;       // weight on the latent cosine term
  double gamma = 2.0;      // hinge margin on squared distances
  double lambda_reg = 1e-4;
  Variant variant = Variant::kFused;
  // Divide the latent cosine by squared norms instead of norms. Not scale
  // invariant; kept for comparison only.
  bool squared_norm_cosine = false;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  std::size_t iterations = 2000;
  std::uint64_t seed = 1;
};

inline void validate_config(const ModelConfig& c) {
  if (c.q == 0 || c.p == 0 || c.h == 0) throw ConfigError("config: q, p, h must be positive");
  if (c.n == 0) throw ConfigError("config: n must be positive");
  if (c.lambda_p < 0.0 || c.lambda_p > 1.0) throw ConfigError("config: lambda_p outside [0,1]");
  if (c.lambda_q < 0.0 || c.lambda_q > 1.0) throw ConfigError("config: lambda_q outside [0,1]");
  if (c.beta < 0.0) throw ConfigError("config: beta must be >= 0");
  if (c.gamma <= 0.0) throw ConfigError("config: gamma must be > 0");
  if (c.lambda_reg < 0.0) throw ConfigError("config: lambda_reg must be >= 0");
  if (c.learning_rate <= 0.0) throw ConfigError("config: learning_rate must be > 0");
}

// Semantic embedding network: attribute -> visual space, two affine layers
// with ReLU after each.
struct SenParams {
  Matrix w1;  // h x q
  Matrix b1;  // h x 1
  Matrix w2;  // p x h
  Matrix b2;  // p x 1
};

// Shared latent embedder applied to both modality prototypes; one affine
// layer + ReLU of the same hidden width as the embedding network.
struct SharedParams {
  Matrix ws;  // h x p
  Matrix bs;  // h x 1
};

namespace detail {
inline Matrix uniform_fan_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in,
                                 std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-bound, bound);
  return m;
}
}  // namespace detail

// Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero. Draw order:
// w1 row-major, then w2, then ws.
inline std::pair<SenParams, SharedParams> init_params(const ModelConfig& config, Rng& rng) {
  validate_config(config);
  SenParams sen;
  sen.w1 = detail::uniform_fan_matrix(config.h, config.q, config.q, config.h, rng);
  sen.b1 = Matrix(config.h, 1);
  sen.w2 = detail::uniform_fan_matrix(config.p, config.h, config.h, config.p, rng);
  sen.b2 = Matrix(config.p, 1);
  SharedParams shared;
  shared.ws = detail::uniform_fan_matrix(config.h, config.p, config.p, config.h, rng);
  shared.bs = Matrix(config.h, 1);
  return {std::move(sen), std::move(shared)};
}

inline Matrix sen_forward(const Matrix& attribute, const SenParams& sen) {
  if (attribute.cols() != 1 || attribute.rows() != sen.w1.cols())
    throw ContractViolation("sen_forward: attribute shape " + attribute.shape() +
                            " incompatible with w1 " + sen.w1.shape());
  const Matrix hidden = relu(add(matmul(sen.w1, attribute), sen.b1));
  return relu(add(matmul(sen.w2, hidden), sen.b2));
}

inline Matrix shared_embed(const Matrix& x, const SharedParams& shared) {
  if (x.cols() != 1 || x.rows() != shared.ws.cols())
    throw ContractViolation("shared_embed: input shape " + x.shape() + " incompatible with ws " +
                            shared.ws.shape());
  return relu(add(matmul(shared.ws, x), shared.bs));
}

// Softmax over the cosine similarities between the embedded semantic
// prototype and each selected sample (the rows of `samples`). Degenerate
// norms fall back to a floored denominator so training never aborts;
// `degenerate` reports the event when non-null.
inline Matrix attention_weights(const Matrix& semantic, const Matrix& samples,
                                bool* degenerate = nullptr) {
  if (samples.cols() != semantic.rows() || semantic.cols() != 1)
    throw ContractViolation("attention_weights: semantic " + semantic.shape() +
                            " vs samples " + samples.shape());
  Matrix sims(samples.rows(), 1);
  bool flagged = false;
  for (std::size_t j = 0; j < samples.rows(); ++j) {
    const Matrix row = samples.row_as_column(j);
    double nu = norm2(semantic), nv = norm2(row);
    if (nu < Tape::kCosineNormFloor) {
      nu = Tape::kCosineNormFloor;
      flagged = true;
    }
    if (nv < Tape::kCosineNormFloor) {
      nv = Tape::kCosineNormFloor;
      flagged = true;
    }
    sims[j] = dot(semantic, row) / (nu * nv);
  }
  if (degenerate) *degenerate = flagged;
  return softmax(sims);
}

// One batch class's prototypes: the embedded semantic prototype, the three
// visual prototypes, and the attention weights that produced the weighted one.
struct ClassPrototypes {
  int class_id = -1;
  Matrix semantic;      // embedded semantic prototype, p x 1
  Matrix visual_avg;    // plain average of the selected samples
  Matrix visual_attn;   // attention-weighted combination
  Matrix visual_fused;  // lambda_p * avg + (1 - lambda_p) * attn
  Matrix attn;          // attention weights, n x 1
};

struct PrototypeSet {
  std::vector<ClassPrototypes> classes;
  bool degenerate_cosine = false;

  const Matrix& target(std::size_t i, Variant v) const {
    switch (v) {
      case Variant::kAverage: return classes[i].visual_avg;
      case Variant::kAttention: return classes[i].visual_attn;
      case Variant::kFused: return classes[i].visual_fused;
    }
    throw ContractViolation("PrototypeSet::target: invalid variant");
  }
};

inline Matrix batch_rows(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Matrix out(indices.size(), ds.feature_dim());
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::size_t j = 0; j < ds.feature_dim(); ++j) out(i, j) = ds.features(indices[i], j);
  return out;
}

inline PrototypeSet build_prototypes(const BalancedBatch& batch, const Dataset& ds,
                                     const SenParams& sen, double lambda_p) {
  PrototypeSet protos;
  protos.classes.reserve(batch.class_ids.size());
  for (std::size_t i = 0; i < batch.class_ids.size(); ++i) {
    ClassPrototypes cp;
    cp.class_id = batch.class_ids[i];
    cp.semantic = sen_forward(ds.attributes.row_as_column(cp.class_id), sen);
    const Matrix samples = batch_rows(ds, batch.per_class_indices[i]);
    cp.visual_avg = mean_rows(samples);
    bool flagged = false;
    cp.attn = attention_weights(cp.semantic, samples, &flagged);
    protos.degenerate_cosine = protos.degenerate_cosine || flagged;
    cp.visual_attn = weighted_sum_rows(samples, cp.attn);
    cp.visual_fused = Matrix(cp.visual_avg.rows(), 1);
    for (std::size_t j = 0; j < cp.visual_fused.size(); ++j)
      cp.visual_fused[j] = lambda_p * cp.visual_avg[j] + (1.0 - lambda_p) * cp.visual_attn[j];
    protos.classes.push_back(std::move(cp));
  }
  return protos;
}

// ---------------------------------------------------------------------------
// Tape builders used by training. The same math as above, recorded for
// reverse-mode differentiation.

struct ParamNodes {
  NodeId w1 = -1, b1 = -1, w2 = -1, b2 = -1, ws = -1, bs = -1;
};

inline ParamNodes register_params(Tape& tape, const SenParams& sen, const SharedParams& shared) {
  ParamNodes pn;
  pn.w1 = tape.leaf(sen.w1, true);
  pn.b1 = tape.leaf(sen.b1, true);
  pn.w2 = tape.leaf(sen.w2, true);
  pn.b2 = tape.leaf(sen.b2, true);
  pn.ws = tape.leaf(shared.ws, true);
  pn.bs = tape.leaf(shared.bs, true);
  return pn;
}

inline NodeId sen_forward_node(Tape& tape, const ParamNodes& pn, NodeId attribute) {
  const NodeId hidden = tape.relu(tape.add(tape.matmul(pn.w1, attribute), pn.b1));
  return tape.relu(tape.add(tape.matmul(pn.w2, hidden), pn.b2));
}

inline NodeId shared_embed_node(Tape& tape, const ParamNodes& pn, NodeId x) {
  return tape.relu(tape.add(tape.matmul(pn.ws, x), pn.bs));
}

struct ClassPrototypeNodes {
  int class_id = -1;
  NodeId semantic = -1;
  NodeId target = -1;  // variant-selected visual prototype
};

// Builds only the nodes the chosen variant needs: the averaged prototype is a
// constant, the attention-weighted one differentiates through the cosine
// similarities and softmax into the embedding parameters.
inline std::vector<ClassPrototypeNodes> build_prototype_nodes(Tape& tape,
                                                              const BalancedBatch& batch,
                                                              const Dataset& ds,
                                                              const ParamNodes& pn,
                                                              Variant variant, double lambda_p) {
  std::vector<ClassPrototypeNodes> out;
  out.reserve(batch.class_ids.size());
  for (std::size_t i = 0; i < batch.class_ids.size(); ++i) {
    ClassPrototypeNodes cn;
    cn.class_id = batch.class_ids[i];
    const NodeId attr = tape.constant(ds.attributes.row_as_column(cn.class_id));
    cn.semantic = sen_forward_node(tape, pn, attr);

    const Matrix samples = batch_rows(ds, batch.per_class_indices[i]);
    const NodeId avg = tape.constant(mean_rows(samples));
    if (variant == Variant::kAverage) {
      cn.target = avg;
    } else {
      const NodeId samples_node = tape.constant(samples);
      std::vector<NodeId> sims;
      sims.reserve(samples.rows());
      for (std::size_t j = 0; j < samples.rows(); ++j)
        sims.push_back(tape.cosine_sim(cn.semantic, tape.constant(samples.row_as_column(j))));
      const NodeId attn = tape.softmax(tape.concat_scalars(std::move(sims)));
      const NodeId weighted = tape.weighted_sum_rows(samples_node, attn);
      cn.target = variant == Variant::kAttention
                      ? weighted
                      : tape.lin_comb({avg, weighted}, {lambda_p, 1.0 - lambda_p});
    }
    out.push_back(cn);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic "SCLM", u16 version, u32 q/h/p, the five loss
// hyperparameters as f64, u8 variant, then w1, b1, w2, b2, ws, bs as f64
// row-major. Everything little-endian.

namespace detail {

inline void write_u16_le(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline std::uint16_t read_u16_le(std::istream& is, const std::string& file) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  check(static_cast<bool>(is), file + ": truncated header");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline void write_f64_le(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& is, const std::string& file) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  check(static_cast<bool>(is), file + ": truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_matrix_f64(std::ostream& os, const Matrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i) write_f64_le(os, m[i]);
}

inline Matrix read_matrix_f64(std::istream& is, std::size_t rows, std::size_t cols,
                              const std::string& file) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = read_f64_le(is, file);
  return m;
}

}  // namespace detail

struct Checkpoint {
  std::size_t q = 0, h = 0, p = 0;
  double lambda_p = 0.0, lambda_q = 0.0, beta = 0.0, gamma = 0.0, lambda_reg = 0.0;
  Variant variant = Variant::kFused;
  SenParams sen;
  SharedParams shared;
};

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                            const SenParams& sen, const SharedParams& shared) {
  using namespace detail;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(os), path.string() + ": cannot open for writing");
  os.write("SCLM", 4);
  write_u16_le(os, 1);
  write_u32_le(os, static_cast<std::uint32_t>(config.q));
  write_u32_le(os, static_cast<std::uint32_t>(config.h));
  write_u32_le(os, static_cast<std::uint32_t>(config.p));
  for (double v : {config.lambda_p, config.lambda_q, config.beta, config.gamma, config.lambda_reg})
    write_f64_le(os, v);
  const unsigned char variant = static_cast<unsigned char>(config.variant);
  os.write(reinterpret_cast<const char*>(&variant), 1);
  write_matrix_f64(os, sen.w1);
  write_matrix_f64(os, sen.b1);
  write_matrix_f64(os, sen.w2);
  write_matrix_f64(os, sen.b2);
  write_matrix_f64(os, shared.ws);
  write_matrix_f64(os, shared.bs);
  check(static_cast<bool>(os), path.string() + ": write failed");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  using namespace detail;
  const std::string name = path.filename().string();
  std::ifstream is(path, std::ios::binary);
  check(static_cast<bool>(is), name + ": cannot open");
  char magic[4];
  is.read(magic, 4);
  check(static_cast<bool>(is) && std::equal(magic, magic + 4, "SCLM"), name + ": bad magic");
  const std::uint16_t version = read_u16_le(is, name);
  check(version == 1, name + ": unsupported format version " + std::to_string(version));
  Checkpoint ck;
  ck.q = read_u32_le(is, name);
  ck.h = read_u32_le(is, name);
  ck.p = read_u32_le(is, name);
  ck.lambda_p = read_f64_le(is, name);
  ck.lambda_q = read_f64_le(is, name);
  ck.beta = read_f64_le(is, name);
  ck.gamma = read_f64_le(is, name);
  ck.lambda_reg = read_f64_le(is, name);
  unsigned char variant = 0;
  is.read(reinterpret_cast<char*>(&variant), 1);
  check(static_cast<bool>(is) && variant <= 2, name + ": bad variant byte");
  ck.variant = static_cast<Variant>(variant);
  ck.sen.w1 = read_matrix_f64(is, ck.h, ck.q, name);
  ck.sen.b1 = read_matrix_f64(is, ck.h, 1, name);
  ck.sen.w2 = read_matrix_f64(is, ck.p, ck.h, name);
  ck.sen.b2 = read_matrix_f64(is, ck.p, 1, name);
  ck.shared.ws = read_matrix_f64(is, ck.h, ck.p, name);
  ck.shared.bs = read_matrix_f64(is, ck.h, 1, name);
  return ck;
}

}  // namespace scilm
