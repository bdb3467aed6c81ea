// Command-line driver: ingest, train, bench, eval, montage, report.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vessel/checkpoint.hpp"
#include "vessel/config.hpp"
#include "vessel/dataset.hpp"
#include "vessel/errors.hpp"
#include "vessel/report.hpp"
#include "vessel/trainer.hpp"

namespace fs = std::filesystem;
using namespace vessel;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitIo = 5;

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return kExitConfig;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Divergence: return kExitDivergence;
    case ErrorCategory::Io: return kExitIo;
    case ErrorCategory::Usage: return 1;
  }
  return 1;
}

struct CommonArgs {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> drive_root, stare_root, chase_root, hrf_root, split_file;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_data = true) {
  cmd->add_option("--config", a.config, "experiment config file (key = value lines)");
  cmd->add_option("--set", a.sets, "override a config key, key=value (repeatable)")->take_all();
  cmd->add_option("--seed", a.seed, "seed for initialization, validation hold-out and augmentation");
  if (!with_data) return;
  cmd->add_option("--drive-root", a.drive_root, "DRIVE root directory");
  cmd->add_option("--stare-root", a.stare_root, "STARE root directory");
  cmd->add_option("--chase-root", a.chase_root, "CHASE_DB1 root directory");
  cmd->add_option("--hrf-root", a.hrf_root, "HRF root directory");
  cmd->add_option("--split-file", a.split_file, "split file (default: shipped combined split)");
}

ExperimentConfig resolve(const CommonArgs& a) {
  std::vector<std::string> overrides = a.sets;
  if (a.seed) {
    overrides.push_back("train.seed=" + std::to_string(*a.seed));
    overrides.push_back("augment.seed=" + std::to_string(*a.seed));
  }
  if (a.drive_root) overrides.push_back("data.drive_root=" + *a.drive_root);
  if (a.stare_root) overrides.push_back("data.stare_root=" + *a.stare_root);
  if (a.chase_root) overrides.push_back("data.chase_root=" + *a.chase_root);
  if (a.hrf_root) overrides.push_back("data.hrf_root=" + *a.hrf_root);
  if (a.split_file) overrides.push_back("data.split_file=" + *a.split_file);
  std::optional<fs::path> path;
  if (a.config) path = *a.config;
  return load_config(path, overrides);
}

std::vector<Architecture> parse_arch_flag(const std::optional<std::string>& flag, const ExperimentConfig& cfg) {
  if (!flag) return cfg.bench_architectures;
  ExperimentConfig probe = cfg;
  apply_setting(probe, "bench.architectures", *flag);
  return probe.bench_architectures;
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

int cmd_ingest(const CommonArgs& a, const std::string& out) {
  const ExperimentConfig cfg = resolve(a);
  if (cfg.data.roots.empty()) throw DataEmptyError("no dataset roots given");
  std::vector<DatasetManifest> manifests;
  for (const auto& [id, root] : cfg.data.roots) {
    manifests.push_back(discover_dataset(root, id));
    const DatasetManifest& m = manifests.back();
    write_records(fs::path(out) / (dataset_token(id) + ".jsonl"), manifest_records(m));
    std::cout << dataset_token(id) << ": " << m.count(Split::Train) << " train, " << m.count(Split::Test)
              << " test\n";
  }
  const CombinedDataset combined = load_combined_dataset(cfg);
  std::vector<SplitRecord> records;
  for (const auto* list : {&combined.train, &combined.test}) {
    for (const ManifestEntry& e : *list) {
      DatasetManifest single;
      single.dataset_id = e.dataset;
      single.root = cfg.data.roots.at(e.dataset);
      single.entries = {e};
      records.push_back(manifest_records(single).front());
    }
  }
  write_records(fs::path(out) / "combined.jsonl", records);
  std::cout << "combined: " << combined.train.size() << " train, " << combined.test.size() << " test\n";
  return 0;
}

int cmd_train(const CommonArgs& a, const std::optional<std::string>& arch, const std::optional<std::string>& out) {
  CommonArgs args = a;
  if (arch) {
    if (*arch == "all") throw ConfigError("train takes a single architecture; use bench for all");
    args.sets.push_back("model.arch=" + *arch);
  }
  if (out) args.sets.push_back("train.output_dir=" + *out);
  const ExperimentConfig cfg = resolve(args);
  const CombinedDataset data = load_combined_dataset(cfg);
  log_line("training " + arch_display_name(cfg.architecture) + " on " + std::to_string(data.train.size()) +
           " images");
  TrainOptions opts;
  opts.on_epoch = [](const EpochRecord& e) {
    log_line("epoch " + std::to_string(e.epoch) + " train_loss " + std::to_string(e.train_loss) + " val_loss " +
             std::to_string(e.val_loss) + " val_f1 " + std::to_string(e.val_f1));
  };
  const TrainResult r = train(cfg, data, opts);
  std::cout << "best epoch " << r.history.best_epoch << ", checkpoint " << r.best_checkpoint.string() << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& a, const std::optional<std::string>& arch, const std::optional<std::string>& out,
              const std::optional<std::string>& from) {
  const ExperimentConfig cfg = resolve(a);
  const auto archs = parse_arch_flag(arch, cfg);
  BenchOptions opts;
  opts.out_root = out ? fs::path(*out) : cfg.output_dir;
  if (from) opts.from_checkpoints = fs::path(*from);
  opts.log = log_line;
  const BenchmarkResult r = run_benchmark(cfg, archs, opts);
  std::cout << emit_table(r, TableFormat::Markdown);
  std::cout << "run directory: " << r.run_dir.string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint, const std::optional<std::string>& out) {
  const ExperimentConfig cfg = resolve(a);
  const LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const CombinedDataset data = load_combined_dataset(cfg);
  EvalOptions opts = eval_options(cfg);
  opts.keep_predictions = 0;
  const Evaluation ev = evaluate(loaded.model, std::span<const ManifestEntry>(data.test), opts);
  BenchmarkResult r;
  r.config_hash = config_hash(cfg);
  r.revision = source_revision();
  r.results.push_back({loaded.model.spec().architecture, ev.report, checkpoint});
  std::cout << emit_table(r, TableFormat::Markdown);
  if (out) {
    r.run_dir = *out;
    write_tables(r);
    write_metrics_json(r, r.run_dir / "metrics.json");
  }
  return 0;
}

int cmd_montage(const CommonArgs& a, const std::string& checkpoints, const std::optional<std::string>& arch,
                const std::string& out) {
  const ExperimentConfig cfg = resolve(a);
  const auto archs = parse_arch_flag(arch, cfg);
  const CombinedDataset data = load_combined_dataset(cfg);
  const std::size_t k = std::min<std::size_t>(cfg.montage_columns, data.test.size());
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < k; ++i) samples.push_back(load_sample(data.test[i]));
  PredictionSet predictions;
  for (Architecture arch_id : archs) {
    const LoadedCheckpoint loaded = load_checkpoint(find_checkpoint(checkpoints, arch_id, cfg.seed));
    for (const Sample& s : samples) {
      const auto prob = predict_probability(loaded.model, s, cfg.preprocess);
      predictions[arch_id].push_back(threshold_map(prob, s.image.width, s.image.height, cfg.threshold));
    }
  }
  std::vector<Architecture> rows;
  for (Architecture x : kAllArchitectures) {
    if (std::find(archs.begin(), archs.end(), x) != archs.end()) rows.push_back(x);
  }
  MontageOptions mopts;
  mopts.cell = cfg.montage_cell;
  write_png(out, render_montage(samples, predictions, rows, mopts));
  std::cout << "montage written to " << out << "\n";
  return 0;
}

int cmd_report(const std::string& run) {
  BenchmarkResult r = read_metrics_json(fs::path(run) / "metrics.json");
  r.run_dir = run;
  write_tables(r);
  std::cout << emit_table(r, TableFormat::Markdown);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retinal vessel segmentation benchmark"};
  app.require_subcommand(1);

  CommonArgs ingest_args, train_args, bench_args, eval_args, montage_args;
  std::string ingest_out = "manifests";
  std::optional<std::string> train_arch, train_out, bench_arch, bench_out, bench_from, eval_out, montage_arch;
  std::string eval_ckpt, montage_ckpts, montage_out = "montage.png", report_run;

  auto* ingest = app.add_subcommand("ingest", "discover datasets and write manifests");
  add_common(ingest, ingest_args);
  ingest->add_option("--out", ingest_out, "manifest output directory");

  auto* train_cmd = app.add_subcommand("train", "train one architecture");
  add_common(train_cmd, train_args);
  train_cmd->add_option("--arch", train_arch, "unet, drvnet, unet-resnet34 or unet-vgg19");
  train_cmd->add_option("--out", train_out, "output directory for checkpoints and history");

  auto* bench = app.add_subcommand("bench", "train and evaluate architectures, write the comparison table");
  add_common(bench, bench_args);
  bench->add_option("--arch", bench_arch, "comma-separated architectures or 'all'");
  bench->add_option("--out", bench_out, "parent directory of the run directory");
  bench->add_option("--from-checkpoints", bench_from, "evaluate checkpoints in this directory instead of training");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--out", eval_out, "directory for results.csv, results.md and metrics.json");

  auto* montage = app.add_subcommand("montage", "render the qualitative comparison grid");
  add_common(montage, montage_args);
  montage->add_option("--checkpoints", montage_ckpts, "directory holding one checkpoint per architecture")
      ->required();
  montage->add_option("--arch", montage_arch, "comma-separated architectures or 'all'");
  montage->add_option("--out", montage_out, "output PNG path");

  auto* report = app.add_subcommand("report", "rebuild tables from a run directory's metrics.json");
  report->add_option("--run", report_run, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_args, ingest_out);
    if (*train_cmd) return cmd_train(train_args, train_arch, train_out);
    if (*bench) return cmd_bench(bench_args, bench_arch, bench_out, bench_from);
    if (*eval) return cmd_eval(eval_args, eval_ckpt, eval_out);
    if (*montage) return cmd_montage(montage_args, montage_ckpts, montage_arch, montage_out);
    if (*report) return cmd_report(report_run);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
