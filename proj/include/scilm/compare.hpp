#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "scilm/dataset.hpp"
#include "scilm/eval.hpp"
#include "scilm/model.hpp"
#include "scilm/train.hpp"

namespace scilm {

struct CompareRow {
  std::string variant;  // "dem", "a", "b" or "c"
  std::uint64_t seed = 0;
  double unseen_acc = 0.0, seen_acc = 0.0, harmonic = 0.0;
};

struct CompareReport {
  std::vector<CompareRow> rows;   // 4 variants x |seeds|
  std::vector<CompareRow> means;  // one per variant, seed column meaningless
};

inline const std::vector<std::string>& compare_variants() {
  static const std::vector<std::string> variants = {"dem", "a", "b", "c"};
  return variants;
}

// Trains every variant on the same dataset with the same seeds (one rng per
// job, so the balanced variants see identical batch streams) and evaluates
// each trained model in the generalized setting. Jobs are independent and may
// run concurrently up to max_threads.
inline CompareReport run_compare(const Dataset& ds, const ModelConfig& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 std::size_t max_threads = 1) {
  if (seeds.empty()) throw ConfigError("compare: need at least one seed");
  struct Job {
    std::string variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const std::string& variant : compare_variants())
    for (std::uint64_t seed : seeds) jobs.push_back({variant, seed});

  std::vector<CompareRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      try {
        const Job& job = jobs[j];
        ModelConfig config = base;
        config.seed = job.seed;
        Rng rng(job.seed);
        TrainResult result;
        if (job.variant == "dem") {
          result = train_baseline_dem(ds, config, rng);
        } else {
          config.variant = variant_from_letter(job.variant[0]);
          result = train(ds, config, rng);
        }
        const EvalResult metrics = gzsc_metrics(result.sen, ds);
        rows[j] = {job.variant, job.seed, metrics.unseen_acc, metrics.seen_acc, metrics.harmonic};
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  std::size_t thread_count = std::min(max_threads == 0 ? std::size_t{1} : max_threads,
                                      jobs.size());
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  CompareReport report;
  report.rows = std::move(rows);
  for (const std::string& variant : compare_variants()) {
    CompareRow mean;
    mean.variant = variant;
    std::size_t count = 0;
    for (const CompareRow& row : report.rows) {
      if (row.variant != variant) continue;
      mean.unseen_acc += row.unseen_acc;
      mean.seen_acc += row.seen_acc;
      mean.harmonic += row.harmonic;
      ++count;
    }
    mean.unseen_acc /= static_cast<double>(count);
    mean.seen_acc /= static_cast<double>(count);
    mean.harmonic /= static_cast<double>(count);
    report.means.push_back(mean);
  }
  return report;
}

inline double mean_harmonic(const CompareReport& report, const std::string& variant) {
  for (const CompareRow& row : report.means)
    if (row.variant == variant) return row.harmonic;
  throw ContractViolation("mean_harmonic: unknown variant " + variant);
}

inline void write_compare_csv(const CompareReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os << "variant,seed,u,s,H\n";
  char buf[160];
  for (const CompareRow& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%.10g,%.10g,%.10g\n", row.variant.c_str(),
                  static_cast<unsigned long long>(row.seed), row.unseen_acc, row.seen_acc,
                  row.harmonic);
    os << buf;
  }
  for (const CompareRow& row : report.means) {
    std::snprintf(buf, sizeof buf, "%s,mean,%.10g,%.10g,%.10g\n", row.variant.c_str(),
                  row.unseen_acc, row.seen_acc, row.harmonic);
    os << buf;
  }
  if (!os) throw DataError(path.string() + ": write failed");
}

}  // namespace scilm
