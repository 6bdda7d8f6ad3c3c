#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "scilm/dataset.hpp"
#include "scilm/error.hpp"
#include "scilm/matrix.hpp"
#include "scilm/model.hpp"

namespace scilm {

// 2us/(u+s); defined as 0 when u + s == 0.
inline double harmonic_mean(double u, double s) {
  const double sum = u + s;
  if (sum <= 0.0) return 0.0;
  return 2.0 * u * s / sum;
}

struct PerClassAccuracy {
  int class_id = -1;
  std::size_t n_test = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
};

struct EvalResult {
  std::string mode;  // "tzsc" or "gzsc"
  std::vector<PerClassAccuracy> per_class;  // classes with >= 1 test instance, ascending id
  double top1 = 0.0;                        // T, tzsc only
  double unseen_acc = 0.0;                  // u
  double seen_acc = 0.0;                    // s
  double harmonic = 0.0;                    // H
  std::map<std::pair<int, int>, std::size_t> confusion;  // (true, predicted) -> count
};

// Rows of sen_forward over the given class ids' attribute vectors.
inline Matrix embed_class_prototypes(const Dataset& ds, const std::vector<int>& class_ids,
                                     const SenParams& sen) {
  if (class_ids.empty()) throw ContractViolation("embed_class_prototypes: empty class list");
  Matrix out(class_ids.size(), ds.feature_dim());
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    const Matrix proto = sen_forward(ds.attributes.row_as_column(class_ids[i]), sen);
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = proto[j];
  }
  return out;
}

inline Matrix embed_unseen_prototypes(const Dataset& ds, const SenParams& sen) {
  return embed_class_prototypes(ds, ds.unseen_classes, sen);
}

// Nearest-prototype prediction; Euclidean by default, 1 - cosine behind the
// flag. Distance ties resolve to the lowest class id regardless of row order.
inline int predict(const Matrix& x, const Matrix& prototypes, const std::vector<int>& class_ids,
                   bool cosine_distance = false) {
  if (prototypes.rows() == 0 || prototypes.rows() != class_ids.size())
    throw ContractViolation("predict: prototype rows and class ids disagree");
  int best_class = -1;
  double best_dist = 0.0;
  for (std::size_t i = 0; i < prototypes.rows(); ++i) {
    const Matrix proto = prototypes.row_as_column(i);
    double dist;
    if (cosine_distance) {
      double nu = norm2(x), nv = norm2(proto);
      nu = std::max(nu, Tape::kCosineNormFloor);
      nv = std::max(nv, Tape::kCosineNormFloor);
      dist = 1.0 - dot(x, proto) / (nu * nv);
    } else {
      dist = sq_dist(x, proto);
    }
    if (best_class < 0 || dist < best_dist ||
        (dist == best_dist && class_ids[i] < best_class)) {
      best_class = class_ids[i];
      best_dist = dist;
    }
  }
  return best_class;
}

namespace detail {

// Per-class top-1 tallies of test instances against a candidate prototype
// set; the macro average is the unweighted mean over classes present.
struct Tally {
  std::map<int, PerClassAccuracy> per_class;
  std::map<std::pair<int, int>, std::size_t> confusion;

  void score(const Dataset& ds, const std::vector<std::size_t>& test_idx,
             const Matrix& prototypes, const std::vector<int>& candidate_ids,
             bool cosine_distance) {
    for (std::size_t ix : test_idx) {
      const int truth = ds.labels[ix];
      const int predicted =
          predict(ds.features.row_as_column(ix), prototypes, candidate_ids, cosine_distance);
      PerClassAccuracy& entry = per_class[truth];
      entry.class_id = truth;
      ++entry.n_test;
      if (predicted == truth) ++entry.n_correct;
      ++confusion[{truth, predicted}];
    }
  }

  // Unweighted mean accuracy over the given classes (those with test data).
  double macro_accuracy(const std::vector<int>& class_ids) const {
    double sum = 0.0;
    std::size_t present = 0;
    for (int cid : class_ids) {
      auto it = per_class.find(cid);
      if (it == per_class.end()) continue;
      sum += static_cast<double>(it->second.n_correct) / static_cast<double>(it->second.n_test);
      ++present;
    }
    return present == 0 ? 0.0 : sum / static_cast<double>(present);
  }

  void finalize(EvalResult& result) const {
    for (const auto& [cid, entry] : per_class) {
      PerClassAccuracy out = entry;
      out.accuracy = static_cast<double>(entry.n_correct) / static_cast<double>(entry.n_test);
      result.per_class.push_back(out);
    }
    for (const auto& [key, count] : confusion) result.confusion[key] += count;
  }
};

}  // namespace detail

// Traditional setting: candidates are the unseen classes only; T is the
// unweighted per-class mean of top-1 accuracy.
inline EvalResult tzsc_accuracy(const SenParams& sen, const Dataset& ds,
                                bool cosine_distance = false) {
  if (ds.test_unseen_idx.empty()) throw EvalError("tzsc: test_unseen split is empty");
  std::vector<int> candidates = ds.unseen_classes;
  std::sort(candidates.begin(), candidates.end());
  const Matrix prototypes = embed_class_prototypes(ds, candidates, sen);

  detail::Tally tally;
  tally.score(ds, ds.test_unseen_idx, prototypes, candidates, cosine_distance);
  EvalResult result;
  result.mode = "tzsc";
  result.top1 = tally.macro_accuracy(candidates);
  tally.finalize(result);
  return result;
}

// Generalized setting: candidates span all classes; u and s are per-class
// means over the unseen and seen test splits, H their harmonic mean.
inline EvalResult gzsc_metrics(const SenParams& sen, const Dataset& ds,
                               bool cosine_distance = false) {
  if (ds.test_unseen_idx.empty()) throw EvalError("gzsc: test_unseen split is empty");
  if (ds.test_seen_idx.empty()) throw EvalError("gzsc: test_seen split is empty");
  std::vector<int> candidates = ds.seen_classes;
  candidates.insert(candidates.end(), ds.unseen_classes.begin(), ds.unseen_classes.end());
  std::sort(candidates.begin(), candidates.end());
  const Matrix prototypes = embed_class_prototypes(ds, candidates, sen);

  detail::Tally tally;
  tally.score(ds, ds.test_unseen_idx, prototypes, candidates, cosine_distance);
  tally.score(ds, ds.test_seen_idx, prototypes, candidates, cosine_distance);
  EvalResult result;
  result.mode = "gzsc";
  result.unseen_acc = tally.macro_accuracy(ds.unseen_classes);
  result.seen_acc = tally.macro_accuracy(ds.seen_classes);
  result.harmonic = harmonic_mean(result.unseen_acc, result.seen_acc);
  tally.finalize(result);
  return result;
}

// ---------------------------------------------------------------------------
// CSV outputs. Files carry raw fractions; percent formatting is left to the
// command-line layer.

inline void write_metrics_csv(const EvalResult& result, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os << "mode,T,u,s,H\n";
  char buf[160];
  if (result.mode == "tzsc")
    std::snprintf(buf, sizeof buf, "tzsc,%.10g,,,\n", result.top1);
  else
    std::snprintf(buf, sizeof buf, "gzsc,,%.10g,%.10g,%.10g\n", result.unseen_acc,
                  result.seen_acc, result.harmonic);
  os << buf;
  if (!os) throw DataError(path.string() + ": write failed");
}

inline void write_per_class_csv(const EvalResult& result, const Dataset& ds,
                                const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os << "class_id,class_name,n_test,acc\n";
  for (const PerClassAccuracy& entry : result.per_class) {
    const std::string name =
        ds.class_names.empty() ? "" : ds.class_names[static_cast<std::size_t>(entry.class_id)];
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%s,%zu,%.10g\n", entry.class_id, name.c_str(),
                  entry.n_test, entry.accuracy);
    os << buf;
  }
  if (!os) throw DataError(path.string() + ": write failed");
}

// Cosine similarities between unseen and seen attribute vectors, one row per
// unseen class.
inline void write_similarity_matrix_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os << "unseen_class";
  for (int cid : ds.seen_classes) os << ",seen_" << cid;
  os << "\n";
  for (int u : ds.unseen_classes) {
    os << u;
    const Matrix au = ds.attributes.row_as_column(u);
    for (int s : ds.seen_classes) {
      const Matrix as = ds.attributes.row_as_column(s);
      double nu = std::max(norm2(au), Tape::kCosineNormFloor);
      double nv = std::max(norm2(as), Tape::kCosineNormFloor);
      char buf[48];
      std::snprintf(buf, sizeof buf, ",%.10g", dot(au, as) / (nu * nv));
      os << buf;
    }
    os << "\n";
  }
  if (!os) throw DataError(path.string() + ": write failed");
}

}  // namespace scilm
