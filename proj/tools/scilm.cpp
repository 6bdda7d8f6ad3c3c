// scilm command-line tool: synthetic data generation, class statistics,
// training, evaluation and variant comparison. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "scilm/scilm.hpp"

namespace fs = std::filesystem;
using namespace scilm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

double pct(double fraction) { return 100.0 * fraction; }

struct GenerateArgs {
  std::string out;
  std::string spec_file;
  bool force = false;
  // -1 sentinels: keep the spec file / default value unless set on the line.
  long long k_seen = -1, t_unseen = -1, p = -1, q = -1, head = -1, tail = -1, attr_link = -1,
            test_per_class = -1;
  double noise_sigma = -1.0;
  long long seed = -1;
};

int cmd_generate(const GenerateArgs& args) {
  SyntheticSpec spec;
  if (!args.spec_file.empty()) spec = load_synthetic_spec(args.spec_file);
  if (args.k_seen >= 0) spec.k_seen = static_cast<std::size_t>(args.k_seen);
  if (args.t_unseen >= 0) spec.t_unseen = static_cast<std::size_t>(args.t_unseen);
  if (args.p >= 0) spec.p = static_cast<std::size_t>(args.p);
  if (args.q >= 0) spec.q = static_cast<std::size_t>(args.q);
  if (args.head >= 0) spec.head_count = static_cast<std::size_t>(args.head);
  if (args.tail >= 0) spec.tail_count = static_cast<std::size_t>(args.tail);
  if (args.attr_link >= 0) spec.attr_link = static_cast<std::size_t>(args.attr_link);
  if (args.test_per_class >= 0) spec.test_per_class = static_cast<std::size_t>(args.test_per_class);
  if (args.noise_sigma >= 0.0) spec.noise_sigma = args.noise_sigma;
  if (args.seed >= 0) spec.seed = static_cast<std::uint64_t>(args.seed);

  const fs::path out(args.out);
  if (fs::exists(out) && !fs::is_empty(out) && !args.force)
    throw DataError(out.string() + ": exists and is not empty (use --force to overwrite)");

  const Dataset ds = make_synthetic_longtail(spec);
  save_dataset(ds, out);
  const ClassStats stats = class_stats(ds);
  std::printf("wrote %s: %zu instances, %zu seen + %zu unseen classes, p=%zu q=%zu\n",
              out.string().c_str(), ds.num_instances(), ds.seen_classes.size(),
              ds.unseen_classes.size(), ds.feature_dim(), ds.attribute_dim());
  std::printf("train counts %zu..%zu, per-class count std %.1f\n", stats.counts_desc.front(),
              stats.counts_desc.back(), stats.std_dev);
  return kExitOk;
}

int cmd_stats(const std::string& data_dir, const std::string& out_csv) {
  const Dataset ds = load_dataset(data_dir);
  const ClassStats stats = class_stats(ds);
  std::printf("training instances per class (descending):\n");
  std::vector<std::pair<int, std::size_t>> sorted = stats.counts;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) {
              return a.second != b.second ? a.second > b.second : a.first < b.first;
            });
  for (const auto& [cid, count] : sorted) {
    const std::string name =
        ds.class_names.empty() ? "" : " " + ds.class_names[static_cast<std::size_t>(cid)];
    std::printf("  class %d%s: %zu\n", cid, name.c_str(), count);
  }
  std::printf("count std dev: %.6g\n", stats.std_dev);

  std::ofstream os(out_csv, std::ios::trunc);
  if (!os) throw DataError(out_csv + ": cannot open for writing");
  os << "class_id,count\n";
  for (const auto& [cid, count] : sorted) os << cid << "," << count << "\n";
  if (!os) throw DataError(out_csv + ": write failed");
  std::printf("wrote %s\n", out_csv.c_str());
  return kExitOk;
}

struct TrainArgs {
  std::string data_dir;
  std::string config_file;
  std::string variant;
  std::string out = "model.bin";
  std::string curve;
  std::string baseline;
  long long seed = -1;
  long long iterations = -1;
};

int cmd_train(const TrainArgs& args) {
  const Dataset ds = load_dataset(args.data_dir);
  RunConfig rc;
  if (!args.config_file.empty()) rc = load_run_config(args.config_file);
  ModelConfig& config = rc.model;
  config.q = ds.attribute_dim();
  config.p = ds.feature_dim();
  if (rc.fixed_q && *rc.fixed_q != config.q)
    throw ConfigError("config: q = " + std::to_string(*rc.fixed_q) + " does not match dataset (" +
                      std::to_string(config.q) + ")");
  if (rc.fixed_p && *rc.fixed_p != config.p)
    throw ConfigError("config: p = " + std::to_string(*rc.fixed_p) + " does not match dataset (" +
                      std::to_string(config.p) + ")");
  if (!args.variant.empty()) config.variant = variant_from_letter(args.variant[0]);
  if (args.seed >= 0) config.seed = static_cast<std::uint64_t>(args.seed);
  if (args.iterations >= 0) config.iterations = static_cast<std::size_t>(args.iterations);
  if (!args.baseline.empty() && args.baseline != "dem")
    throw ConfigError("--baseline: only 'dem' is supported");

  Rng rng(config.seed);
  const TrainResult result = args.baseline == "dem" ? train_baseline_dem(ds, config, rng)
                                                    : train(ds, config, rng);

  save_checkpoint(args.out, config, result.sen, result.shared);
  const fs::path curve_path =
      args.curve.empty() ? fs::path(args.out).parent_path() / "loss_curve.csv" : fs::path(args.curve);
  write_loss_curve(result.report, curve_path);

  if (!result.report.losses.empty()) {
    const LossBreakdown& final_losses = result.report.losses.back();
    std::printf("final losses: l1=%.6g l2=%.6g l3=%.6g reg=%.6g total=%.6g\n", final_losses.l1,
                final_losses.l2, final_losses.l3, final_losses.reg, final_losses.total);
  }
  const PhaseTimes& t = result.report.phase_times;
  std::printf("%zu iterations (sample %.2fs, forward %.2fs, backward %.2fs, update %.2fs)\n",
              result.report.iterations, t.sample_s, t.forward_s, t.backward_s, t.update_s);
  if (result.report.total_degenerate_cosine() > 0)
    std::printf("note: %d degenerate cosine denominators floored during training\n",
                result.report.total_degenerate_cosine());
  std::printf("wrote %s and %s\n", args.out.c_str(), curve_path.string().c_str());
  return kExitOk;
}

struct EvalArgs {
  std::string model_file;
  std::string data_dir;
  std::string mode = "gzsc";
  std::string out_dir = ".";
  bool cosine = false;
  bool sim_matrix = false;
};

int cmd_eval(const EvalArgs& args) {
  const Dataset ds = load_dataset(args.data_dir);
  const Checkpoint ck = load_checkpoint(args.model_file);
  if (ck.q != ds.attribute_dim() || ck.p != ds.feature_dim())
    throw DataError("checkpoint dims (q=" + std::to_string(ck.q) + ", p=" + std::to_string(ck.p) +
                    ") do not match dataset (q=" + std::to_string(ds.attribute_dim()) +
                    ", p=" + std::to_string(ds.feature_dim()) + ")");

  EvalResult result;
  if (args.mode == "tzsc") {
    result = tzsc_accuracy(ck.sen, ds, args.cosine);
    std::printf("TZSC T = %.1f%%\n", pct(result.top1));
  } else if (args.mode == "gzsc") {
    result = gzsc_metrics(ck.sen, ds, args.cosine);
    std::printf("GZSC u = %.1f%%  s = %.1f%%  H = %.1f%%\n", pct(result.unseen_acc),
                pct(result.seen_acc), pct(result.harmonic));
  } else {
    throw ConfigError("--mode: expected tzsc or gzsc, got '" + args.mode + "'");
  }

  const fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  write_metrics_csv(result, out_dir / "metrics.csv");
  write_per_class_csv(result, ds, out_dir / "per_class.csv");
  if (args.sim_matrix) write_similarity_matrix_csv(ds, out_dir / "similarity_matrix.csv");
  std::printf("wrote %s\n", (out_dir / "metrics.csv").string().c_str());
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
  ModelConfig config;
  config.q = 8;
  config.h = 6;
  config.p = 10;
  config.n = 3;
  const std::size_t k = 4;
  double overall = 0.0;
  for (const Variant variant : {Variant::kAverage, Variant::kAttention, Variant::kFused}) {
    config.variant = variant;
    Rng rng(seed);
    const GradcheckReport report = gradcheck(config, k, rng);
    std::printf("variant %c:\n", variant_letter(variant));
    for (const GradcheckEntry& entry : report.entries)
      std::printf("  %-3s %zux%zu  max rel error %.3e\n", entry.name.c_str(),
                  entry.analytic.rows(), entry.analytic.cols(), entry.max_rel_error);
    overall = std::max(overall, report.max_rel_error);
  }
  std::printf("max relative error: %.3e (threshold 1e-4)\n", overall);
  if (!(overall < 1e-4)) {
    std::fprintf(stderr, "gradient check FAILED\n");
    return kExitNumerical;
  }
  return kExitOk;
}

struct CompareArgs {
  std::string data_dir;
  std::string config_file;
  std::vector<std::uint64_t> seeds;
  std::string out = "report.csv";
  long long iterations = -1;
};

std::size_t compare_thread_cap() {
  if (const char* env = std::getenv("SCILM_THREADS")) {
    const long v = std::atol(env);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

int cmd_compare(const CompareArgs& args) {
  const Dataset ds = load_dataset(args.data_dir);
  RunConfig rc;
  if (!args.config_file.empty()) rc = load_run_config(args.config_file);
  rc.model.q = ds.attribute_dim();
  rc.model.p = ds.feature_dim();
  if (args.iterations >= 0) rc.model.iterations = static_cast<std::size_t>(args.iterations);

  const CompareReport report = run_compare(ds, rc.model, args.seeds, compare_thread_cap());
  write_compare_csv(report, args.out);
  std::printf("%-8s %8s %8s %8s\n", "variant", "u", "s", "H");
  for (const CompareRow& row : report.means)
    std::printf("%-8s %7.1f%% %7.1f%% %7.1f%%\n", row.variant.c_str(), pct(row.unseen_acc),
                pct(row.seen_acc), pct(row.harmonic));
  std::printf("wrote %s\n", args.out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scilm: class-imbalance-aware zero-shot classification"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic long-tailed dataset");
  generate->add_option("--out", gen.out, "output dataset directory")->required();
  generate->add_option("--spec", gen.spec_file, "spec file (key = value lines)");
  const auto nonneg = CLI::NonNegativeNumber;
  generate->add_option("--seed", gen.seed, "generator seed")->check(nonneg);
  generate->add_option("--k-seen", gen.k_seen, "seen class count")->check(nonneg);
  generate->add_option("--t-unseen", gen.t_unseen, "unseen class count")->check(nonneg);
  generate->add_option("--p", gen.p, "visual feature dimensionality")->check(nonneg);
  generate->add_option("--q", gen.q, "attribute dimensionality")->check(nonneg);
  generate->add_option("--head", gen.head, "largest per-class training count")->check(nonneg);
  generate->add_option("--tail", gen.tail, "smallest per-class training count")->check(nonneg);
  generate->add_option("--noise-sigma", gen.noise_sigma, "within-class feature noise")
      ->check(nonneg);
  generate->add_option("--attr-link", gen.attr_link,
                       "unseen classes planted next to tail seen classes")
      ->check(nonneg);
  generate->add_option("--test-per-class", gen.test_per_class, "test instances per class")
      ->check(nonneg);
  generate->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  std::string stats_data, stats_csv = "class_counts.csv";
  CLI::App* stats = app.add_subcommand("stats", "per-class training counts and their spread");
  stats->add_option("--data", stats_data, "dataset directory")->required();
  stats->add_option("--out-csv", stats_csv, "counts CSV path");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--data", tr.data_dir, "dataset directory")->required();
  train_cmd->add_option("--config", tr.config_file, "run configuration file");
  train_cmd->add_option("--variant", tr.variant, "prototype variant: a, b or c")
      ->check(CLI::IsMember({"a", "b", "c"}));
  train_cmd->add_option("--out", tr.out, "checkpoint output path");
  train_cmd->add_option("--curve", tr.curve, "loss curve CSV path");
  train_cmd->add_option("--baseline", tr.baseline, "train a baseline instead (dem)")
      ->check(CLI::IsMember({"dem"}));
  train_cmd->add_option("--seed", tr.seed, "seed override")->check(nonneg);
  train_cmd->add_option("--iterations", tr.iterations, "iteration override")->check(nonneg);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--model", ev.model_file, "checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data_dir, "dataset directory")->required();
  eval_cmd->add_option("--mode", ev.mode, "tzsc or gzsc")
      ->check(CLI::IsMember({"tzsc", "gzsc"}));
  eval_cmd->add_option("--out-dir", ev.out_dir, "directory for metric CSVs");
  eval_cmd->add_flag("--cosine", ev.cosine, "use cosine distance for prediction");
  eval_cmd->add_flag("--sim-matrix", ev.sim_matrix, "also write similarity_matrix.csv");

  std::uint64_t gc_seed = 1;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "analytic gradients vs finite differences");
  gradcheck_cmd->add_option("--seed", gc_seed, "seed");

  CompareArgs cp;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "train and evaluate baseline and all variants");
  compare_cmd->add_option("--data", cp.data_dir, "dataset directory")->required();
  compare_cmd->add_option("--config", cp.config_file, "run configuration file");
  compare_cmd->add_option("--seeds", cp.seeds, "comma-separated seeds")
      ->required()
      ->delimiter(',');
  compare_cmd->add_option("--out", cp.out, "report CSV path");
  compare_cmd->add_option("--iterations", cp.iterations, "iteration override")->check(nonneg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (stats->parsed()) return cmd_stats(stats_data, stats_csv);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc_seed);
    if (compare_cmd->parsed()) return cmd_compare(cp);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const EvalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  } catch (const ContractViolation& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitUsage;
}
