#include "vessel/report.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <regex>

#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include "vessel/checkpoint.hpp"
#include "vessel/errors.hpp"
#include "vessel/trainer.hpp"

namespace vessel {

using nlohmann::json;

std::string format_metric(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

std::string emit_table(const BenchmarkResult& result, TableFormat format) {
  std::string out;
  if (format == TableFormat::Csv) {
    out += "Method";
    for (const char* h : kMetricHeaders) out += std::string(",") + h;
    out += "\n";
    for (const ArchitectureResult& r : result.results) {
      out += arch_display_name(r.architecture);
      for (double v : metric_row(r.report.summary)) out += "," + format_metric(v);
      out += "\n";
    }
  } else {
    out += "| Method |";
    for (const char* h : kMetricHeaders) out += std::string(" ") + h + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < std::size(kMetricHeaders); ++i) out += "---:|";
    out += "\n";
    for (const ArchitectureResult& r : result.results) {
      out += "| " + arch_display_name(r.architecture) + " |";
      for (double v : metric_row(r.report.summary)) out += " " + format_metric(v) + " |";
      out += "\n";
    }
  }
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out << text;
  if (!out) throw IOError("write failed: " + path.string());
}

}  // namespace

void write_tables(BenchmarkResult& result) {
  result.table_csv = result.run_dir / "results.csv";
  result.table_md = result.run_dir / "results.md";
  write_text(result.table_csv, emit_table(result, TableFormat::Csv));
  write_text(result.table_md, emit_table(result, TableFormat::Markdown));
}

// --- montage ----------------------------------------------------------------

namespace {

cv::Mat to_mat(const Image8& img) {
  if (img.channels == 3) {
    return cv::Mat(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.data.data())).clone();
  }
  // Binary planes are shown white on black.
  cv::Mat grey(img.height, img.width, CV_8UC1);
  const bool binary = is_binary(img);
  for (std::size_t i = 0; i < img.pixels(); ++i) grey.data[i] = binary ? img.data[i] * 255 : img.data[i];
  cv::Mat rgb;
  cv::cvtColor(grey, rgb, cv::COLOR_GRAY2RGB);
  return rgb;
}

void paste_fitted(cv::Mat& canvas, const Image8& img, int x0, int y0, int cell, bool binary) {
  const cv::Mat src = to_mat(img);
  const double scale = static_cast<double>(cell) / std::max(src.cols, src.rows);
  const int w = std::max(1, static_cast<int>(std::lround(src.cols * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(src.rows * scale)));
  cv::Mat fitted;
  cv::resize(src, fitted, cv::Size(w, h), 0, 0, binary ? cv::INTER_NEAREST : cv::INTER_AREA);
  fitted.copyTo(canvas(cv::Rect(x0 + (cell - w) / 2, y0 + (cell - h) / 2, w, h)));
}

}  // namespace

Image8 render_montage(std::span<const Sample> samples, const PredictionSet& predictions,
                      std::span<const Architecture> rows, const MontageOptions& options) {
  if (samples.empty()) throw EmptyList("montage needs at least one sample");
  for (Architecture arch : rows) {
    auto it = predictions.find(arch);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      if (it == predictions.end() || i >= it->second.size() || it->second[i].data.empty()) {
        throw MissingPredictionError("no " + arch_display_name(arch) + " prediction for sample " + s.sample_id);
      }
      const Image8& p = it->second[i];
      if (p.width != s.image.width || p.height != s.image.height) {
        throw ShapeError(arch_display_name(arch) + " prediction for " + s.sample_id + " has the wrong size");
      }
    }
  }

  const int n_rows = 2 + static_cast<int>(rows.size());
  const int n_cols = static_cast<int>(samples.size());
  const int cell = options.cell;
  const int gap = options.gap;
  const int width = options.label_width + n_cols * (cell + gap) + gap;
  const int height = n_rows * (cell + gap) + gap;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  std::vector<std::string> labels = {"Original", "Ground truth"};
  for (Architecture a : rows) labels.push_back(arch_display_name(a));
  const double font_scale = std::max(0.4, cell / 256.0 * 0.75);
  for (int r = 0; r < n_rows; ++r) {
    int baseline = 0;
    const cv::Size text = cv::getTextSize(labels[r], cv::FONT_HERSHEY_SIMPLEX, font_scale, 2, &baseline);
    const int y = gap + r * (cell + gap) + (cell + text.height) / 2;
    cv::putText(canvas, labels[r], cv::Point(8, y), cv::FONT_HERSHEY_SIMPLEX, font_scale, cv::Scalar(0, 0, 0), 2,
                cv::LINE_AA);
  }
  for (int c = 0; c < n_cols; ++c) {
    const int x = options.label_width + gap + c * (cell + gap);
    const Sample& s = samples[c];
    paste_fitted(canvas, s.image, x, gap, cell, false);
    paste_fitted(canvas, s.vessel_mask, x, gap + (cell + gap), cell, true);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      paste_fitted(canvas, predictions.at(rows[r])[c], x, gap + static_cast<int>(r + 2) * (cell + gap), cell, true);
    }
  }

  Image8 out(width, height, 3);
  for (int y = 0; y < height; ++y) {
    std::copy(canvas.ptr<std::uint8_t>(y), canvas.ptr<std::uint8_t>(y) + width * 3, &out.at(y, 0));
  }
  return out;
}

// --- run bookkeeping -----------------------------------------------------------

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path make_run_dir(const fs::path& root) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "run-%Y%m%d-%H%M%S", &tm);
  fs::create_directories(root);
  fs::path dir = root / buf;
  for (int k = 1; fs::exists(dir); ++k) dir = root / (std::string(buf) + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

std::string source_revision() {
  const std::string cmd = std::string("git -C \"") + VESSEL_SOURCE_DIR + "\" rev-parse --short HEAD 2>/dev/null";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) return "unknown";
  std::array<char, 128> buf{};
  std::string out;
  while (std::fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

fs::path find_checkpoint(const fs::path& dir, Architecture arch, std::uint64_t seed) {
  if (!fs::is_directory(dir)) throw IOError("checkpoint directory " + dir.string() + " does not exist");
  const std::regex pattern("^" + std::regex_replace(arch_token(arch), std::regex("-"), "\\-") + "_" +
                           std::to_string(seed) + "_([0-9]+)\\.ckpt$");
  fs::path best;
  long best_epoch = -1;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const long epoch = std::stol(m[1].str());
    if (epoch > best_epoch || (epoch == best_epoch && e.path() < best)) {
      best_epoch = epoch;
      best = e.path();
    }
  }
  if (best.empty()) {
    throw IOError("no " + arch_token(arch) + "_" + std::to_string(seed) + "_*.ckpt under " + dir.string());
  }
  return best;
}

namespace {

json counts_json(const ConfusionCounts& c) { return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}}; }

ConfusionCounts counts_from_json(const json& j) {
  return {j.at("tp").get<std::int64_t>(), j.at("tn").get<std::int64_t>(), j.at("fp").get<std::int64_t>(),
          j.at("fn").get<std::int64_t>()};
}

}  // namespace

void write_metrics_json(const BenchmarkResult& result, const fs::path& path) {
  json j;
  j["config_hash"] = result.config_hash;
  j["revision"] = result.revision;
  j["started_at"] = result.started_at;
  j["finished_at"] = result.finished_at;
  json archs = json::array();
  for (const ArchitectureResult& r : result.results) {
    json a;
    a["architecture"] = arch_token(r.architecture);
    a["checkpoint"] = r.checkpoint.string();
    a["aggregation"] = aggregation_token(r.report.mode);
    json summary;
    const auto row = metric_row(r.report.summary);
    for (std::size_t i = 0; i < row.size(); ++i) summary[kMetricHeaders[i]] = row[i];
    a["summary"] = summary;
    a["pooled"] = counts_json(r.report.pooled);
    json per = json::array();
    for (const ImageMetrics& m : r.report.per_image) {
      json e = counts_json(m.counts);
      e["sample_id"] = m.sample_id;
      per.push_back(e);
    }
    a["per_image"] = per;
    archs.push_back(a);
  }
  j["architectures"] = archs;
  write_text(path, j.dump(2) + "\n");
}

BenchmarkResult read_metrics_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot read " + path.string());
  BenchmarkResult result;
  try {
    const json j = json::parse(in);
    result.config_hash = j.value("config_hash", "");
    result.revision = j.value("revision", "");
    result.started_at = j.value("started_at", "");
    result.finished_at = j.value("finished_at", "");
    result.run_dir = path.parent_path();
    for (const json& a : j.at("architectures")) {
      ArchitectureResult r;
      r.architecture = parse_architecture(a.at("architecture").get<std::string>());
      r.checkpoint = a.value("checkpoint", "");
      r.report.mode = parse_aggregation(a.at("aggregation").get<std::string>());
      const json& s = a.at("summary");
      r.report.summary = {s.at("Accuracy").get<double>(), s.at("Precision").get<double>(),
                          s.at("Recall").get<double>(), s.at("F1-Score").get<double>(),
                          s.at("Mean IoU").get<double>()};
      r.report.pooled = counts_from_json(a.at("pooled"));
      for (const json& e : a.at("per_image")) {
        ImageMetrics m;
        m.sample_id = e.at("sample_id").get<std::string>();
        m.counts = counts_from_json(e);
        m.values = compute_metrics(m.counts);
        r.report.per_image.push_back(std::move(m));
      }
      result.results.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IOError(path.string() + ": " + e.what());
  }
  return result;
}

// --- orchestration -----------------------------------------------------------------

namespace {

template <class F>
auto stage(const std::string& name, const BenchOptions& options, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const std::exception& e) {
    const std::string line = "stage '" + name + "' failed: " + e.what();
    if (options.log) {
      options.log(line);
    } else {
      std::cerr << line << "\n";
    }
    throw;
  }
}

}  // namespace

BenchmarkResult run_benchmark(const ExperimentConfig& config, std::span<const Architecture> architectures,
                              const BenchOptions& options) {
  if (architectures.empty()) throw ConfigError("no architectures requested");
  auto log = [&](const std::string& s) {
    if (options.log) options.log(s);
  };
  BenchmarkResult result;
  result.started_at = utc_timestamp();
  result.config_hash = config_hash(config);
  result.revision = source_revision();
  result.run_dir = make_run_dir(options.out_root);
  write_text(result.run_dir / "config.txt", canonical_text(config));

  const CombinedDataset data = stage("ingest", options, [&] { return load_combined_dataset(config); });
  if (data.test.empty()) throw DataEmptyError("the test split is empty");
  log("ingest: " + std::to_string(data.train.size()) + " train / " + std::to_string(data.test.size()) + " test");

  std::optional<PreparedData> prepared;
  if (!options.from_checkpoints) {
    prepared = stage("preprocess", options, [&] { return prepare_training_data(config, data.train); });
    log("augmented training set: " + std::to_string(prepared->train.size()) + " inputs, " +
        std::to_string(prepared->val.size()) + " held out for validation");
  }

  PredictionSet predictions;
  const EvalOptions eval_opts = eval_options(config);
  for (Architecture arch : architectures) {
    ExperimentConfig cfg = config;
    cfg.architecture = arch;
    cfg.output_dir = result.run_dir / arch_token(arch);
    ArchitectureResult r;
    r.architecture = arch;
    std::optional<ModelHandle> model;
    if (options.from_checkpoints) {
      r.checkpoint = stage("load " + arch_token(arch), options,
                           [&] { return find_checkpoint(*options.from_checkpoints, arch, config.seed); });
      LoadedCheckpoint loaded = stage("load " + arch_token(arch), options, [&] { return load_checkpoint(r.checkpoint); });
      if (loaded.model.spec().architecture != arch) {
        throw SpecMismatchError(r.checkpoint.string() + " holds a " + arch_token(loaded.model.spec().architecture));
      }
      model.emplace(std::move(loaded.model));
    } else {
      log("training " + arch_display_name(arch));
      TrainOptions topts;
      topts.on_epoch = [&](const EpochRecord& e) {
        log(arch_token(arch) + " epoch " + std::to_string(e.epoch) + " train_loss " + std::to_string(e.train_loss) +
            " val_loss " + std::to_string(e.val_loss) + " val_f1 " + std::to_string(e.val_f1));
      };
      TrainResult tr = stage("train " + arch_token(arch), options, [&] { return train(cfg, *prepared, topts); });
      r.checkpoint = tr.best_checkpoint;
      model.emplace(std::move(tr.model));
    }
    Evaluation ev = stage("evaluate " + arch_token(arch), options,
                          [&] { return evaluate(*model, std::span<const ManifestEntry>(data.test), eval_opts); });
    r.report = std::move(ev.report);
    predictions[arch] = std::move(ev.predictions);
    log(arch_display_name(arch) + ": F1 " + format_metric(r.report.summary.f1));
    result.results.push_back(std::move(r));
  }

  stage("montage", options, [&] {
    std::vector<Sample> samples;
    const std::size_t k = std::min<std::size_t>(config.montage_columns, data.test.size());
    for (std::size_t i = 0; i < k; ++i) samples.push_back(load_sample(data.test[i]));
    std::vector<Architecture> rows;
    for (Architecture a : kAllArchitectures) {
      if (std::find(architectures.begin(), architectures.end(), a) != architectures.end()) rows.push_back(a);
    }
    MontageOptions mopts;
    mopts.cell = config.montage_cell;
    result.montage = result.run_dir / "montage.png";
    write_png(result.montage, render_montage(samples, predictions, rows, mopts));
  });

  result.finished_at = utc_timestamp();
  stage("report", options, [&] {
    write_tables(result);
    write_metrics_json(result, result.run_dir / "metrics.json");
    json run;
    run["config_hash"] = result.config_hash;
    run["revision"] = result.revision;
    run["started_at"] = result.started_at;
    run["finished_at"] = result.finished_at;
    run["mode"] = options.from_checkpoints ? "from_checkpoints" : "train";
    json ckpts = json::object();
    for (const ArchitectureResult& r : result.results) ckpts[arch_token(r.architecture)] = r.checkpoint.string();
    run["checkpoints"] = ckpts;
    run["results_csv"] = result.table_csv.string();
    run["results_md"] = result.table_md.string();
    run["montage"] = result.montage.string();
    write_text(result.run_dir / "run.json", run.dump(2) + "\n");
  });
  return result;
}

}  // namespace vessel
