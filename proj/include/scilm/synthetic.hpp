#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scilm/dataset.hpp"
#include "scilm/error.hpp"
#include "scilm/matrix.hpp"
#include "scilm/rng.hpp"

namespace scilm {

// Recipe for a deterministic long-tailed synthetic dataset. Per-class training
// counts follow a geometric schedule from head_count down to tail_count across
// the seen classes, mimicking heavily skewed real-world class sizes.
struct SyntheticSpec {
  std::size_t k_seen = 20;
  std::size_t t_unseen = 5;
  std::size_t p = 32;  // visual feature dimensionality
  std::size_t q = 16;  // attribute dimensionality
  std::size_t head_count = 500;
  std::size_t tail_count = 5;
  double noise_sigma = 0.2;
  // Number of unseen classes whose attribute is planted next to a tail seen
  // class's attribute, so that transfer to them hinges on the tail classes.
  std::size_t attr_link = 3;
  std::size_t test_per_class = 50;
  // Fold features to nonnegative values (matches post-ReLU visual features,
  // which the embedding network's output layer can reach).
  bool nonneg_features = true;
  std::uint64_t seed = 0;
};

inline void validate_spec(const SyntheticSpec& spec) {
  if (spec.k_seen == 0 || spec.p == 0 || spec.q == 0)
    throw ContractViolation("SyntheticSpec: k_seen, p and q must be positive");
  if (spec.tail_count < 1 || spec.head_count < spec.tail_count)
    throw ContractViolation("SyntheticSpec: need head_count >= tail_count >= 1");
  if (spec.attr_link > spec.t_unseen || spec.attr_link > spec.k_seen)
    throw ContractViolation("SyntheticSpec: attr_link exceeds t_unseen or k_seen");
  if (spec.noise_sigma < 0.0) throw ContractViolation("SyntheticSpec: negative noise_sigma");
  if (spec.test_per_class < 1) throw ContractViolation("SyntheticSpec: test_per_class must be >= 1");
}

// count_i = round(head * (tail/head)^(i/(k-1))): exact endpoints, constant
// ratio between adjacent classes up to rounding.
inline std::vector<std::size_t> geometric_counts(std::size_t head, std::size_t tail,
                                                 std::size_t k) {
  std::vector<std::size_t> counts(k);
  if (k == 1) {
    counts[0] = head;
    return counts;
  }
  const double log_ratio = std::log(static_cast<double>(tail) / static_cast<double>(head));
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = static_cast<double>(head) *
                         std::exp(log_ratio * static_cast<double>(i) / static_cast<double>(k - 1));
    counts[i] = static_cast<std::size_t>(std::llround(exact));
    if (counts[i] < 1) counts[i] = 1;
  }
  return counts;
}

// Which unseen class is planted next to which seen class: linked unseen class
// j (the j-th entry of the unseen list) copies the attribute of the seen class
// with the j-th smallest training count, i.e. seen index k-1-j under the
// descending geometric schedule. Returns (unseen id, seen id) pairs.
inline std::vector<std::pair<int, int>> synthetic_linked_pairs(const SyntheticSpec& spec) {
  validate_spec(spec);
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t j = 0; j < spec.attr_link; ++j)
    pairs.emplace_back(static_cast<int>(spec.k_seen + j),
                       static_cast<int>(spec.k_seen - 1 - j));
  return pairs;
}

// Deterministic given spec.seed. Construction order (all draws from one
// stream): ground-truth linear map G (p x q, row-major), then one q-normal
// block per class id for attributes, then per-instance feature noise in class
// id order, training instances before test instances within a class.
inline Dataset make_synthetic_longtail(const SyntheticSpec& spec) {
  validate_spec(spec);
  Rng rng(spec.seed);
  const std::size_t k = spec.k_seen, t = spec.t_unseen, total = k + t;

  Matrix ground_truth_map(spec.p, spec.q);
  for (std::size_t i = 0; i < ground_truth_map.size(); ++i) ground_truth_map[i] = rng.normal();

  Dataset ds;
  ds.attributes = Matrix(total, spec.q);
  std::vector<int> link_target(total, -1);
  for (const auto& [u, s] : synthetic_linked_pairs(spec)) link_target[u] = s;
  for (std::size_t c = 0; c < total; ++c) {
    std::vector<double> attr(spec.q);
    for (double& v : attr) v = rng.normal();
    if (link_target[c] >= 0) {
      // perturbed copy of the tail seen class's attribute
      for (std::size_t j = 0; j < spec.q; ++j)
        attr[j] = ds.attributes(link_target[c], j) + 0.1 * attr[j];
    }
    double norm = 0.0;
    for (double v : attr) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (std::size_t j = 0; j < spec.q; ++j) ds.attributes(c, j) = attr[j] / norm;
  }

  std::vector<Matrix> class_means;
  class_means.reserve(total);
  for (std::size_t c = 0; c < total; ++c) {
    Matrix mean = matmul(ground_truth_map, ds.attributes.row_as_column(c));
    if (spec.nonneg_features)
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = std::fabs(mean[i]);
    class_means.push_back(std::move(mean));
  }

  const std::vector<std::size_t> train_counts =
      geometric_counts(spec.head_count, spec.tail_count, k);
  std::size_t total_instances = 0;
  for (std::size_t c = 0; c < k; ++c) total_instances += train_counts[c] + spec.test_per_class;
  total_instances += t * spec.test_per_class;

  ds.features = Matrix(total_instances, spec.p);
  ds.labels.assign(total_instances, 0);
  std::size_t row = 0;
  auto emit_instance = [&](std::size_t cls) {
    const Matrix& mean = class_means[cls];
    for (std::size_t j = 0; j < spec.p; ++j) {
      double v = mean[j] + spec.noise_sigma * rng.normal();
      if (spec.nonneg_features) v = std::fabs(v);
      ds.features(row, j) = v;
    }
    ds.labels[row] = static_cast<int>(cls);
    return row++;
  };
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < train_counts[c]; ++i) ds.train_idx.push_back(emit_instance(c));
    for (std::size_t i = 0; i < spec.test_per_class; ++i)
      ds.test_seen_idx.push_back(emit_instance(c));
  }
  for (std::size_t c = k; c < total; ++c)
    for (std::size_t i = 0; i < spec.test_per_class; ++i)
      ds.test_unseen_idx.push_back(emit_instance(c));

  for (std::size_t c = 0; c < k; ++c) ds.seen_classes.push_back(static_cast<int>(c));
  for (std::size_t c = k; c < total; ++c) ds.unseen_classes.push_back(static_cast<int>(c));

  validate_dataset(ds);
  return ds;
}

}  // namespace scilm
