// Acceptance suite: end-to-end checks of the numeric contracts, the sampler
// guarantees, the synthetic-benchmark behavior and the command-line surface.
// Prints one PASS/FAIL line per criterion; exit code 0 only if all pass.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "scilm/scilm.hpp"

namespace fs = std::filesystem;
using namespace scilm;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
  std::printf("[%s] C%d %-28s %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// C1: harmonic mean on the published generalized-accuracy pairs.

void criterion_1() {
  Timer timer;
  const struct {
    double u, s, expected;
  } rows[] = {{52.9, 72.2, 61.1}, {39.2, 77.3, 52.1}, {22.8, 62.7, 33.4}};
  bool pass = true;
  double worst = 0.0;
  for (const auto& row : rows) {
    const double h = harmonic_mean(row.u, row.s);
    worst = std::max(worst, std::fabs(h - row.expected));
    pass = pass && std::fabs(h - row.expected) <= 0.15;
  }
  report(1, "harmonic-mean formula", pass, fmt("max |H - published| = %.3f (tol 0.15)", worst),
         timer.elapsed());
}

// ---------------------------------------------------------------------------
// C2: analytic gradients vs central finite differences, 20 seeds, all
// variants, on the small configuration.

void criterion_2() {
  Timer timer;
  double worst = 0.0;
  for (const Variant variant : {Variant::kAverage, Variant::kAttention, Variant::kFused}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      ModelConfig config;
      config.q = 8;
      config.h = 6;
      config.p = 10;
      config.n = 3;
      config.variant = variant;
      Rng rng(seed);
      const GradcheckReport rep = gradcheck(config, 4, rng, 1e-5);
      worst = std::max(worst, rep.max_rel_error);
    }
  }
  report(2, "gradient oracle", worst < 1e-4, fmt("max rel error %.3e (tol 1e-4)", worst),
         timer.elapsed());
}

// ---------------------------------------------------------------------------
// C3: balanced-sampler contract on class sizes {500, 100, 20, 3}.

void criterion_3() {
  Timer timer;
  Rng data_rng(404);
  Dataset ds;
  const std::vector<std::size_t> sizes = {500, 100, 20, 3};
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  ds.features = Matrix(total, 2);
  for (std::size_t i = 0; i < ds.features.size(); ++i) ds.features[i] = data_rng.normal();
  ds.attributes = Matrix(4, 2, 0.5);
  std::size_t row = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    ds.seen_classes.push_back(static_cast<int>(c));
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      ds.labels.push_back(static_cast<int>(c));
      ds.train_idx.push_back(row++);
    }
  }
  validate_dataset(ds);
  const auto by_class = train_indices_by_class(ds);
  const std::set<std::size_t> tiny_pool(by_class[3].begin(), by_class[3].end());

  Rng rng(405);
  const std::size_t n = 10;
  bool pass = true;
  for (int iter = 0; iter < 1000 && pass; ++iter) {
    const BalancedBatch batch = sample_balanced_batch(ds, by_class, n, rng);
    pass = pass && batch.class_ids.size() == 4;
    for (std::size_t c = 0; c < batch.class_ids.size() && pass; ++c) {
      pass = pass && batch.per_class_indices[c].size() == n;
      for (std::size_t ix : batch.per_class_indices[c]) {
        pass = pass && ds.labels[ix] == batch.class_ids[c];
        if (batch.class_ids[c] == 3) pass = pass && tiny_pool.count(ix) == 1;
      }
    }
  }
  report(3, "sampler contract", pass, "1000 batches, n=10 per class, sizes {500,100,20,3}",
         timer.elapsed());
}

// ---------------------------------------------------------------------------
// C4: prototypes vs an independent brute-force computation.

namespace brute {

std::vector<double> mean(const Matrix& rows) {
  std::vector<double> out(rows.cols(), 0.0);
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t j = 0; j < rows.cols(); ++j) out[j] += rows(i, j);
  for (double& v : out) v /= static_cast<double>(rows.rows());
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::max(std::sqrt(na), 1e-12);
  nb = std::max(std::sqrt(nb), 1e-12);
  return dot / (na * nb);
}

std::vector<double> softmax(const std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

}  // namespace brute

void criterion_4() {
  Timer timer;
  ModelConfig config;
  config.q = 6;
  config.p = 9;
  config.h = 7;
  config.n = 5;
  const double lambda_p = 0.4;
  Rng rng(406);
  bool pass = true;
  double worst = 0.0, worst_alpha = 0.0;
  for (int trial = 0; trial < 100 && pass; ++trial) {
    SyntheticSpec spec;
    spec.k_seen = 4;
    spec.t_unseen = 1;
    spec.p = config.p;
    spec.q = config.q;
    spec.head_count = 12;
    spec.tail_count = 2;
    spec.attr_link = 0;
    spec.test_per_class = 1;
    spec.noise_sigma = 0.3;
    spec.seed = rng.next_u64();
    const Dataset ds = make_synthetic_longtail(spec);
    Rng prng(rng.next_u64());
    auto [sen, shared] = init_params(config, prng);
    const BalancedBatch batch = sample_balanced_batch(ds, config.n, prng);
    const PrototypeSet protos = build_prototypes(batch, ds, sen, lambda_p);

    for (std::size_t c = 0; c < protos.classes.size(); ++c) {
      const ClassPrototypes& cp = protos.classes[c];
      const Matrix samples = batch_rows(ds, batch.per_class_indices[c]);

      const std::vector<double> avg = brute::mean(samples);
      std::vector<double> semantic(cp.semantic.values().begin(), cp.semantic.values().end());
      std::vector<double> sims;
      for (std::size_t r = 0; r < samples.rows(); ++r) {
        std::vector<double> row(samples.cols());
        for (std::size_t j = 0; j < samples.cols(); ++j) row[j] = samples(r, j);
        sims.push_back(brute::cosine(semantic, row));
      }
      const std::vector<double> alpha = brute::softmax(sims);
      std::vector<double> weighted(samples.cols(), 0.0);
      for (std::size_t r = 0; r < samples.rows(); ++r)
        for (std::size_t j = 0; j < samples.cols(); ++j)
          weighted[j] += alpha[r] * samples(r, j);

      double alpha_sum = 0.0;
      for (std::size_t r = 0; r < samples.rows(); ++r) {
        worst = std::max(worst, std::fabs(cp.attn[r] - alpha[r]));
        alpha_sum += cp.attn[r];
      }
      worst_alpha = std::max(worst_alpha, std::fabs(alpha_sum - 1.0));
      for (std::size_t j = 0; j < samples.cols(); ++j) {
        worst = std::max(worst, std::fabs(cp.visual_avg[j] - avg[j]));
        worst = std::max(worst, std::fabs(cp.visual_attn[j] - weighted[j]));
        const double fused = lambda_p * avg[j] + (1.0 - lambda_p) * weighted[j];
        worst = std::max(worst, std::fabs(cp.visual_fused[j] - fused));
      }
    }
    pass = worst <= 1e-12 && worst_alpha <= 1e-9;
  }
  report(4, "prototype oracles", pass,
         fmt("max |impl - brute| = %.2e (tol 1e-12), |sum(alpha)-1| = %.2e (tol 1e-9)", worst,
             worst_alpha),
         timer.elapsed());
}

// ---------------------------------------------------------------------------
// C5-C7 share the benchmark dataset and configuration.

SyntheticSpec benchmark_spec() {
  SyntheticSpec spec;
  spec.k_seen = 20;
  spec.t_unseen = 5;
  spec.head_count = 500;
  spec.tail_count = 5;
  spec.p = 32;
  spec.q = 16;
  spec.noise_sigma = 0.2;
  spec.attr_link = 3;
  spec.seed = 8007;
  return spec;
}

ModelConfig benchmark_config() {
  ModelConfig config;
  config.q = 16;
  config.p = 32;
  config.h = 24;
  config.variant = Variant::kFused;
  config.optimizer = OptimizerKind::kAdam;
  config.learning_rate = 1e-3;
  config.iterations = 2000;
  return config;
}

// The method comparison runs the embedder at the minimal width able to
// represent the generator's folded-linear ground-truth map (two hidden units
// per output coordinate); below that, every method is capacity-starved and
// the comparison degenerates.
ModelConfig comparison_config() {
  ModelConfig config = benchmark_config();
  config.h = 64;
  return config;
}

void criterion_5(const Dataset& ds) {
  Timer timer;
  const ModelConfig config = benchmark_config();
  Rng rng(1);
  bool pass = false;
  std::string detail;
  try {
    const TrainResult result = train(ds, config, rng);
    const double at10 = result.report.losses[9].total;
    const double final_total = result.report.losses.back().total;
    bool finite = true;
    for (const LossBreakdown& lb : result.report.losses)
      finite = finite && std::isfinite(lb.total);
    pass = finite && final_total < 0.5 * at10;
    detail = fmt("loss @10 = %.3f, final = %.3f (need < %.3f), finite = %s", at10, final_total,
                 0.5 * at10, finite ? "yes" : "no");
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(5, "convergence", pass, detail, timer.elapsed());
}

struct TrendRun {
  std::string variant;
  std::uint64_t seed;
  EvalResult metrics;
};

void criteria_6_and_7(const Dataset& ds) {
  Timer timer;
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const std::vector<std::string> variants = {"dem", "a", "b", "c"};
  std::vector<TrendRun> runs;
  std::string failure;
  try {
    for (const std::string& variant : variants) {
      for (std::uint64_t seed : seeds) {
        ModelConfig config = comparison_config();
        config.seed = seed;
        Rng rng(seed);
        TrainResult result;
        if (variant == "dem") {
          result = train_baseline_dem(ds, config, rng);
        } else {
          config.variant = variant_from_letter(variant[0]);
          result = train(ds, config, rng);
        }
        runs.push_back({variant, seed, gzsc_metrics(result.sen, ds)});
      }
    }
  } catch (const std::exception& e) {
    failure = e.what();
  }

  if (!failure.empty()) {
    report(6, "ablation trend", false, "exception: " + failure, timer.elapsed());
    report(7, "small-class transfer", false, "exception: " + failure, 0.0);
    return;
  }

  std::map<std::string, double> mean_h;
  for (const std::string& variant : variants) {
    double sum = 0.0;
    for (const TrendRun& run : runs)
      if (run.variant == variant) sum += run.metrics.harmonic;
    mean_h[variant] = sum / static_cast<double>(seeds.size());
  }
  const bool trend = mean_h["c"] >= mean_h["b"] && mean_h["b"] >= mean_h["a"] &&
                     mean_h["c"] - mean_h["a"] > 0.0 && mean_h["c"] > mean_h["dem"];
  report(6, "ablation trend", trend,
         fmt("mean H%%: dem %.1f, a %.1f, b %.1f, c %.1f (need c >= b >= a, c > a, c > dem)",
             100.0 * mean_h["dem"], 100.0 * mean_h["a"], 100.0 * mean_h["b"],
             100.0 * mean_h["c"]),
         timer.elapsed());

  // C7: unseen accuracy restricted to the classes planted next to the tail.
  Timer timer7;
  std::vector<int> linked;
  for (const auto& [unseen_id, seen_id] : synthetic_linked_pairs(benchmark_spec()))
    linked.push_back(unseen_id);
  auto linked_mean = [&](const std::string& variant) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const TrendRun& run : runs) {
      if (run.variant != variant) continue;
      for (const PerClassAccuracy& entry : run.metrics.per_class)
        for (int cid : linked)
          if (entry.class_id == cid) {
            sum += entry.accuracy;
            ++count;
          }
    }
    return sum / static_cast<double>(count);
  };
  const double linked_c = linked_mean("c");
  const double linked_dem = linked_mean("dem");
  report(7, "small-class transfer", linked_c > linked_dem,
         fmt("linked-class unseen acc%%: c %.1f vs dem %.1f (need c > dem)", 100.0 * linked_c,
             100.0 * linked_dem),
         timer7.elapsed());
}

// ---------------------------------------------------------------------------
// C8: hand-counted metrics on a 30-instance handcrafted dataset.

void criterion_8() {
  Timer timer;
  // identity embedder over 2-d nonnegative attributes
  SenParams sen{Matrix(2, 2, {1, 0, 0, 1}), Matrix(2, 1), Matrix(2, 2, {1, 0, 0, 1}),
                Matrix(2, 1)};
  Dataset ds;
  ds.attributes = Matrix(4, 2, {0, 0, 10, 0, 0, 10, 10, 10});
  ds.seen_classes = {0, 1};
  ds.unseen_classes = {2, 3};

  std::vector<std::pair<int, std::pair<double, double>>> rows;
  // 6 training instances (3 per seen class)
  for (int r = 0; r < 3; ++r) {
    rows.push_back({0, {0.0 + 0.1 * r, 0.0}});
    rows.push_back({1, {10.0 - 0.1 * r, 0.0}});
  }
  // 12 seen test instances: class 0 has 8 (6 correct, 2 at class 1's corner),
  // class 1 has 4 (all correct)
  for (int r = 0; r < 6; ++r) rows.push_back({0, {0.2, 0.1 * r}});
  rows.push_back({0, {9.9, 0.1}});
  rows.push_back({0, {10.1, 0.0}});
  for (int r = 0; r < 4; ++r) rows.push_back({1, {9.8 + 0.1 * r, 0.2}});
  // 12 unseen test instances: class 2 has 6 (3 correct, 3 at class 3's
  // corner), class 3 has 6 (all correct)
  for (int r = 0; r < 3; ++r) rows.push_back({2, {0.1 * r, 9.9}});
  for (int r = 0; r < 3; ++r) rows.push_back({2, {9.9, 9.8 + 0.1 * r}});
  for (int r = 0; r < 6; ++r) rows.push_back({3, {10.2, 9.7 + 0.1 * r}});

  ds.features = Matrix(rows.size(), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.labels.push_back(rows[i].first);
    ds.features(i, 0) = rows[i].second.first;
    ds.features(i, 1) = rows[i].second.second;
  }
  for (std::size_t i = 0; i < 6; ++i) ds.train_idx.push_back(i);
  for (std::size_t i = 6; i < 18; ++i) ds.test_seen_idx.push_back(i);
  for (std::size_t i = 18; i < 30; ++i) ds.test_unseen_idx.push_back(i);
  validate_dataset(ds);

  bool pass = true;
  std::string detail;
  try {
    // hand count, generalized: class 0 -> 6/8, class 1 -> 4/4,
    // class 2 -> 3/6, class 3 -> 6/6
    const EvalResult g = gzsc_metrics(sen, ds);
    const double expected_s = (6.0 / 8.0 + 1.0) / 2.0;   // 0.875
    const double expected_u = (3.0 / 6.0 + 1.0) / 2.0;   // 0.75
    pass = pass && g.seen_acc == expected_s && g.unseen_acc == expected_u;
    // hand count, traditional (candidates restricted to classes 2 and 3):
    // the same instances are right/wrong, so T = (1/2 + 1) / 2
    const EvalResult t = tzsc_accuracy(sen, ds);
    pass = pass && t.top1 == (0.5 + 1.0) / 2.0;
    detail = fmt("u = %.4f (hand 0.75), s = %.4f (hand 0.875), T = %.4f (hand 0.75)",
                 g.unseen_acc, g.seen_acc, t.top1);
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("exception: ") + e.what();
  }
  report(8, "metric oracle", pass, detail, timer.elapsed());
}

// ---------------------------------------------------------------------------
// C9: the command-line tool is bit-deterministic.

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !ca.empty() && ca == cb;
}

bool same_directory_bytes(const fs::path& a, const fs::path& b) {
  std::set<std::string> names_a, names_b;
  for (const auto& entry : fs::directory_iterator(a)) names_a.insert(entry.path().filename().string());
  for (const auto& entry : fs::directory_iterator(b)) names_b.insert(entry.path().filename().string());
  if (names_a != names_b || names_a.empty()) return false;
  for (const std::string& name : names_a)
    if (!same_bytes(a / name, b / name)) return false;
  return true;
}

int run_command(const std::string& command) {
  const int status = std::system((command + " > /dev/null 2>&1").c_str());
  return status;
}

void criterion_9(const std::string& cli) {
  Timer timer;
  if (cli.empty()) {
    report(9, "cli determinism", false, "no --cli path given", timer.elapsed());
    return;
  }
  const fs::path scratch =
      fs::temp_directory_path() / ("scilm_accept_" + std::to_string(::getpid()));
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  bool pass = true;
  std::string detail = "generate + train twice, byte-compared";
  const std::string gen_args =
      " --k-seen 6 --t-unseen 2 --p 8 --q 4 --head 40 --tail 3 --attr-link 1"
      " --test-per-class 5 --seed 77 --out ";
  if (run_command(cli + " generate" + gen_args + (scratch / "d1").string()) != 0 ||
      run_command(cli + " generate" + gen_args + (scratch / "d2").string()) != 0) {
    pass = false;
    detail = "generate failed";
  }
  if (pass && !same_directory_bytes(scratch / "d1", scratch / "d2")) {
    pass = false;
    detail = "generated directories differ";
  }
  if (pass) {
    const std::string train_args = " train --data " + (scratch / "d1").string() +
                                   " --variant c --seed 5 --iterations 50 --out ";
    if (run_command(cli + train_args + (scratch / "m1.bin").string() + " --curve " +
                    (scratch / "c1.csv").string()) != 0 ||
        run_command(cli + train_args + (scratch / "m2.bin").string() + " --curve " +
                    (scratch / "c2.csv").string()) != 0) {
      pass = false;
      detail = "train failed";
    } else if (!same_bytes(scratch / "m1.bin", scratch / "m2.bin")) {
      pass = false;
      detail = "checkpoints differ";
    } else if (!same_bytes(scratch / "c1.csv", scratch / "c2.csv")) {
      pass = false;
      detail = "loss curves differ";
    }
  }
  fs::remove_all(scratch);
  report(9, "cli determinism", pass, detail, timer.elapsed());
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();

  Timer data_timer;
  const Dataset benchmark = make_synthetic_longtail(benchmark_spec());
  std::printf("benchmark dataset: %zu instances (%.1fs)\n", benchmark.num_instances(),
              data_timer.elapsed());
  criterion_5(benchmark);
  criteria_6_and_7(benchmark);
  criterion_8();
  criterion_9(cli);

  if (g_failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criteria FAILED\n", g_failures);
  return 1;
}
