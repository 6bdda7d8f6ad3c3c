#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "scilm/dataset.hpp"
#include "scilm/error.hpp"
#include "scilm/rng.hpp"

namespace scilm {

// One training iteration's class-balanced sample: exactly n instance indices
// for every seen class, so every class contributes equally to the step
// regardless of its training-set size.
struct BalancedBatch {
  std::vector<int> class_ids;                           // the k seen classes, fixed order
  std::vector<std::vector<std::size_t>> per_class_indices;  // each of length n
  std::size_t samples_per_class = 0;
};

// Classes with >= n training instances are sampled uniformly without
// replacement (partial Fisher-Yates); smaller classes fall back to uniform
// with replacement so they still contribute exactly n samples.
inline BalancedBatch sample_balanced_batch(const Dataset& ds,
                                           const std::vector<std::vector<std::size_t>>& by_class,
                                           std::size_t n, Rng& rng) {
  if (n == 0) throw ContractViolation("sample_balanced_batch: n must be positive");
  BalancedBatch batch;
  batch.samples_per_class = n;
  batch.class_ids = ds.seen_classes;
  batch.per_class_indices.reserve(ds.seen_classes.size());
  for (int cid : ds.seen_classes) {
    const std::vector<std::size_t>& pool = by_class[cid];
    if (pool.empty())
      throw ConfigError("sample_balanced_batch: seen class " + std::to_string(cid) +
                        " has no training instances");
    std::vector<std::size_t> picks;
    picks.reserve(n);
    if (pool.size() >= n) {
      std::vector<std::size_t> shuffled = pool;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + rng.uniform_index(shuffled.size() - i);
        std::swap(shuffled[i], shuffled[j]);
        picks.push_back(shuffled[i]);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) picks.push_back(pool[rng.uniform_index(pool.size())]);
    }
    batch.per_class_indices.push_back(std::move(picks));
  }
  return batch;
}

inline BalancedBatch sample_balanced_batch(const Dataset& ds, std::size_t n, Rng& rng) {
  return sample_balanced_batch(ds, train_indices_by_class(ds), n, rng);
}

// Uniform-over-instances batch, the conventional mini-batch scheme the
// balanced sampler is contrasted with. With replacement.
inline std::vector<std::size_t> sample_uniform_batch(const Dataset& ds, std::size_t batch_size,
                                                     Rng& rng) {
  if (ds.train_idx.empty())
    throw ConfigError("sample_uniform_batch: dataset has no training instances");
  std::vector<std::size_t> picks;
  picks.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    picks.push_back(ds.train_idx[rng.uniform_index(ds.train_idx.size())]);
  return picks;
}

}  // namespace scilm
