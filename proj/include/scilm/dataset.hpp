#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "scilm/error.hpp"
#include "scilm/matrix.hpp"

namespace scilm {

// A zero-shot classification dataset: instance visual features, per-class
// attribute vectors shared across seen and unseen classes, and disjoint
// train / test-seen / test-unseen instance splits. Class ids are global
// (one attribute row per class id). Immutable after load.
struct Dataset {
  Matrix features;    // N x p
  std::vector<int> labels;  // length N, class ids
  Matrix attributes;  // C x q, C = total classes
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_seen_idx;
  std::vector<std::size_t> test_unseen_idx;
  std::vector<std::string> class_names;  // optional; empty or size C

  std::size_t num_instances() const { return features.rows(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t attribute_dim() const { return attributes.cols(); }
  std::size_t num_classes() const { return attributes.rows(); }
};

// Per-class training-split statistics. Counts are taken over train_idx only
// (not the full dataset) and the standard deviation is the population form
// over seen classes.
struct ClassStats {
  std::vector<std::pair<int, std::size_t>> counts;  // (class id, count), seen-class order
  std::vector<std::size_t> counts_desc;             // counts sorted descending
  double std_dev = 0.0;
};

namespace detail {

inline void check(bool ok, const std::string& message) {
  if (!ok) throw DataError(message);
}

inline bool is_sorted_unique(const std::vector<std::size_t>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] <= v[i - 1]) return false;
  return true;
}

}  // namespace detail

// Full invariant check; throws DataError naming the offense.
inline void validate_dataset(const Dataset& ds) {
  using detail::check;
  const std::size_t n = ds.num_instances();
  const std::size_t c = ds.num_classes();
  check(ds.labels.size() == n, "labels.txt: expected " + std::to_string(n) + " entries, got " +
                                   std::to_string(ds.labels.size()));
  for (std::size_t i = 0; i < n; ++i)
    check(ds.labels[i] >= 0 && static_cast<std::size_t>(ds.labels[i]) < c,
          "labels.txt: class id " + std::to_string(ds.labels[i]) + " at line " + std::to_string(i) +
              " outside [0," + std::to_string(c) + ")");
  check(!ds.seen_classes.empty(), "seen.txt: no seen classes");
  std::unordered_set<int> seen(ds.seen_classes.begin(), ds.seen_classes.end());
  std::unordered_set<int> unseen(ds.unseen_classes.begin(), ds.unseen_classes.end());
  check(seen.size() == ds.seen_classes.size(), "seen.txt: duplicate class id");
  check(unseen.size() == ds.unseen_classes.size(), "unseen.txt: duplicate class id");
  for (int cid : ds.seen_classes)
    check(cid >= 0 && static_cast<std::size_t>(cid) < c,
          "seen.txt: class id " + std::to_string(cid) + " outside [0," + std::to_string(c) + ")");
  for (int cid : ds.unseen_classes) {
    check(cid >= 0 && static_cast<std::size_t>(cid) < c,
          "unseen.txt: class id " + std::to_string(cid) + " outside [0," + std::to_string(c) + ")");
    check(seen.count(cid) == 0, "seen.txt/unseen.txt: class " + std::to_string(cid) + " in both");
  }
  if (!ds.class_names.empty())
    check(ds.class_names.size() == c, "classes.txt: expected " + std::to_string(c) + " names, got " +
                                          std::to_string(ds.class_names.size()));

  const struct {
    const char* name;
    const std::vector<std::size_t>& idx;
    bool must_be_seen;
  } splits[] = {{"train_idx.txt", ds.train_idx, true},
                {"test_seen_idx.txt", ds.test_seen_idx, true},
                {"test_unseen_idx.txt", ds.test_unseen_idx, false}};
  std::vector<signed char> owner(n, -1);
  for (int s = 0; s < 3; ++s) {
    for (std::size_t ix : splits[s].idx) {
      check(ix < n, std::string(splits[s].name) + ": index " + std::to_string(ix) +
                        " outside [0," + std::to_string(n) + ")");
      if (owner[ix] == s)
        throw DataError(std::string(splits[s].name) + ": duplicate index " + std::to_string(ix));
      if (owner[ix] != -1)
        throw DataError(std::string(splits[s].name) + ": index " + std::to_string(ix) +
                        " also in " + splits[owner[ix]].name);
      owner[ix] = static_cast<signed char>(s);
      const int label = ds.labels[ix];
      if (splits[s].must_be_seen)
        check(seen.count(label) != 0, std::string(splits[s].name) + ": index " +
                                          std::to_string(ix) + " has unseen-class label " +
                                          std::to_string(label));
      else
        check(unseen.count(label) != 0, std::string(splits[s].name) + ": index " +
                                            std::to_string(ix) + " has seen-class label " +
                                            std::to_string(label));
    }
  }

  std::unordered_set<int> with_train;
  for (std::size_t ix : ds.train_idx) with_train.insert(ds.labels[ix]);
  for (int cid : ds.seen_classes)
    check(with_train.count(cid) != 0,
          "train_idx.txt: seen class " + std::to_string(cid) + " has no training instances");
}

inline ClassStats class_stats(const Dataset& ds) {
  ClassStats stats;
  std::vector<std::size_t> per_class(ds.num_classes(), 0);
  for (std::size_t ix : ds.train_idx) ++per_class[ds.labels[ix]];
  double mean = 0.0;
  for (int cid : ds.seen_classes) {
    stats.counts.emplace_back(cid, per_class[cid]);
    mean += static_cast<double>(per_class[cid]);
  }
  mean /= static_cast<double>(ds.seen_classes.size());
  double var = 0.0;
  for (const auto& [cid, count] : stats.counts) {
    const double d = static_cast<double>(count) - mean;
    var += d * d;
  }
  var /= static_cast<double>(stats.counts.size());
  stats.std_dev = std::sqrt(var);
  for (const auto& [cid, count] : stats.counts) stats.counts_desc.push_back(count);
  std::sort(stats.counts_desc.rbegin(), stats.counts_desc.rend());
  return stats;
}

// Training instance indices grouped by class id.
inline std::vector<std::vector<std::size_t>> train_indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t ix : ds.train_idx) by_class[ds.labels[ix]].push_back(ix);
  return by_class;
}

// ---------------------------------------------------------------------------
// On-disk format. Binary files are little-endian; a features.csv /
// attributes.csv fallback (comma-separated, no header) is accepted when the
// .bin file is absent. Features are stored as 32-bit floats and widened to
// 64-bit on load.

namespace detail {

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& is, const std::string& file) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check(static_cast<bool>(is), file + ": truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32_le(std::ostream& os, float v) {
  std::uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 4);
  write_u32_le(os, bits);
}

inline float read_f32_le(std::istream& is, const std::string& file) {
  const std::uint32_t bits = read_u32_le(is, file);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline Matrix read_float_matrix_bin(const std::filesystem::path& path, const char magic[4]) {
  const std::string name = path.filename().string();
  std::ifstream is(path, std::ios::binary);
  check(static_cast<bool>(is), name + ": cannot open");
  char got[4];
  is.read(got, 4);
  check(static_cast<bool>(is) && std::equal(got, got + 4, magic),
        name + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
  const std::uint32_t rows = read_u32_le(is, name);
  const std::uint32_t cols = read_u32_le(is, name);
  check(rows > 0 && cols > 0, name + ": zero dimension in header");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<double>(read_f32_le(is, name));
  check(static_cast<bool>(is), name + ": truncated payload");
  return m;
}

inline void write_float_matrix_bin(const std::filesystem::path& path, const char magic[4],
                                   const Matrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(os), path.string() + ": cannot open for writing");
  os.write(magic, 4);
  write_u32_le(os, static_cast<std::uint32_t>(m.rows()));
  write_u32_le(os, static_cast<std::uint32_t>(m.cols()));
  for (std::size_t i = 0; i < m.size(); ++i) write_f32_le(os, static_cast<float>(m[i]));
  check(static_cast<bool>(os), path.string() + ": write failed");
}

inline Matrix read_float_matrix_csv(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  std::ifstream is(path);
  check(static_cast<bool>(is), name + ": cannot open");
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t row_cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(name + ": unparsable value \"" + cell + "\" at row " +
                        std::to_string(rows));
      }
      ++row_cols;
    }
    if (rows == 0) cols = row_cols;
    check(row_cols == cols, name + ": row " + std::to_string(rows) + " has " +
                                std::to_string(row_cols) + " cells, expected " +
                                std::to_string(cols));
    ++rows;
  }
  check(rows > 0 && cols > 0, name + ": empty file");
  return Matrix(rows, cols, std::move(values));
}

template <typename T>
std::vector<T> read_int_lines(const std::filesystem::path& path, bool required) {
  const std::string name = path.filename().string();
  std::ifstream is(path);
  if (!is) {
    check(!required, name + ": missing file");
    return {};
  }
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(line, &used);
      check(used == line.size(), name + ": trailing characters at line " + std::to_string(lineno));
      check(v >= 0, name + ": negative value at line " + std::to_string(lineno));
      out.push_back(static_cast<T>(v));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError(name + ": unparsable value \"" + line + "\" at line " +
                      std::to_string(lineno));
    }
  }
  return out;
}

template <typename T>
void write_lines(const std::filesystem::path& path, const std::vector<T>& values) {
  std::ofstream os(path, std::ios::trunc);
  check(static_cast<bool>(os), path.string() + ": cannot open for writing");
  for (const T& v : values) os << v << "\n";
  check(static_cast<bool>(os), path.string() + ": write failed");
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& dir) {
  using namespace detail;
  check(std::filesystem::is_directory(dir), dir.string() + ": not a directory");
  Dataset ds;

  if (std::filesystem::exists(dir / "features.bin"))
    ds.features = read_float_matrix_bin(dir / "features.bin", "ZSLF");
  else if (std::filesystem::exists(dir / "features.csv"))
    ds.features = read_float_matrix_csv(dir / "features.csv");
  else
    throw DataError("features.bin: missing file (no features.csv fallback either)");

  if (std::filesystem::exists(dir / "attributes.bin"))
    ds.attributes = read_float_matrix_bin(dir / "attributes.bin", "ZSLA");
  else if (std::filesystem::exists(dir / "attributes.csv"))
    ds.attributes = read_float_matrix_csv(dir / "attributes.csv");
  else
    throw DataError("attributes.bin: missing file (no attributes.csv fallback either)");

  ds.labels = read_int_lines<int>(dir / "labels.txt", true);
  ds.seen_classes = read_int_lines<int>(dir / "seen.txt", true);
  ds.unseen_classes = read_int_lines<int>(dir / "unseen.txt", true);
  ds.train_idx = read_int_lines<std::size_t>(dir / "train_idx.txt", true);
  ds.test_seen_idx = read_int_lines<std::size_t>(dir / "test_seen_idx.txt", true);
  ds.test_unseen_idx = read_int_lines<std::size_t>(dir / "test_unseen_idx.txt", true);
  if (std::filesystem::exists(dir / "classes.txt")) {
    std::ifstream is(dir / "classes.txt");
    std::string line;
    while (std::getline(is, line)) {
      while (!line.empty() && line.back() == '\r') line.pop_back();
      ds.class_names.push_back(line);
    }
  }

  validate_dataset(ds);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  using namespace detail;
  validate_dataset(ds);
  std::filesystem::create_directories(dir);
  write_float_matrix_bin(dir / "features.bin", "ZSLF", ds.features);
  write_float_matrix_bin(dir / "attributes.bin", "ZSLA", ds.attributes);
  write_lines(dir / "labels.txt", ds.labels);
  write_lines(dir / "seen.txt", ds.seen_classes);
  write_lines(dir / "unseen.txt", ds.unseen_classes);
  write_lines(dir / "train_idx.txt", ds.train_idx);
  write_lines(dir / "test_seen_idx.txt", ds.test_seen_idx);
  write_lines(dir / "test_unseen_idx.txt", ds.test_unseen_idx);
  if (!ds.class_names.empty()) write_lines(dir / "classes.txt", ds.class_names);
}

}  // namespace scilm
