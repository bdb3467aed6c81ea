#include "vessel/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "vessel/errors.hpp"
#include "vessel/rng.hpp"

namespace vessel {

ModelSpec ExperimentConfig::model_spec(Architecture arch) const {
  ModelSpec spec = default_spec(arch);
  spec.base_width = base_width;
  spec.rdn_layers = rdn_layers;
  spec.rdn_growth = rdn_growth;
  spec.rse_reduction = rse_reduction;
  const bool backbone = arch == Architecture::UnetResnet34 || arch == Architecture::UnetVgg19;
  if (auto it = pretrained_by_arch.find(arch); it != pretrained_by_arch.end()) {
    spec.pretrained_weights = it->second;
  } else if (backbone && arch == architecture && pretrained_weights) {
    spec.pretrained_weights = pretrained_weights;
  }
  return spec;
}

namespace {

const std::map<std::string, double LossConfig::*>& loss_fields() {
  static const std::map<std::string, double LossConfig::*> fields = {{"bce_weight", &LossConfig::bce_weight},
                                                                     {"dice_weight", &LossConfig::dice_weight},
                                                                     {"epsilon", &LossConfig::smooth_epsilon},
                                                                     {"prob_clamp", &LossConfig::prob_clamp}};
  return fields;
}

}  // namespace

LossConfig ExperimentConfig::loss_config(Architecture arch) const {
  LossConfig out = loss;
  if (auto it = loss_by_arch.find(arch); it != loss_by_arch.end()) {
    for (const auto& [field, value] : it->second) out.*loss_fields().at(field) = value;
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(key + ": '" + value + "' is not " + expected);
}

long long parse_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const long long x = parse_integer(key, v);
  if (x < INT32_MIN || x > INT32_MAX) bad_value(key, v, "a 32-bit integer");
  return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an unsigned 64-bit integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "+inf") return INFINITY;
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || std::isnan(out)) bad_value(key, v, "a real number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::string real_text(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<Architecture> parse_arch_list(const std::string& v) {
  if (v == "all") return {std::begin(kAllArchitectures), std::end(kAllArchitectures)};
  std::vector<Architecture> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const Architecture a = parse_architecture(item);
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  }
  if (out.empty()) throw ConfigError("bench.architectures is empty");
  return out;
}

const std::map<std::string, DatasetId>& root_keys() {
  static const std::map<std::string, DatasetId> keys = {{"data.drive_root", DatasetId::Drive},
                                                        {"data.stare_root", DatasetId::Stare},
                                                        {"data.chase_root", DatasetId::ChaseDb1},
                                                        {"data.hrf_root", DatasetId::Hrf}};
  return keys;
}

}  // namespace

void apply_setting(ExperimentConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters = {
      {"model.arch", [&] { c.architecture = parse_architecture(v); }},
      {"model.base_width", [&] { c.base_width = parse_int(key, v); }},
      {"model.rdn_layers", [&] { c.rdn_layers = parse_int(key, v); }},
      {"model.rdn_growth", [&] { c.rdn_growth = parse_int(key, v); }},
      {"model.rse_reduction", [&] { c.rse_reduction = parse_int(key, v); }},
      {"model.pretrained_weights",
       [&] { c.pretrained_weights = v.empty() ? std::nullopt : std::optional<fs::path>(v); }},
      {"preprocess.target_size", [&] { c.preprocess.target_size = parse_int(key, v); }},
      {"preprocess.clahe_clip", [&] { c.preprocess.clahe_clip_limit = parse_real(key, v); }},
      {"preprocess.clahe_tiles", [&] { c.preprocess.clahe_tile_grid = parse_int(key, v); }},
      {"augment.copies", [&] { c.augment.copies_per_image = parse_int(key, v); }},
      {"augment.rotation_bound", [&] { c.augment.rotation_bound_degrees = parse_real(key, v); }},
      {"augment.seed", [&] { c.augment.seed = parse_u64(key, v); }},
      {"loss.bce_weight", [&] { c.loss.bce_weight = parse_real(key, v); }},
      {"loss.dice_weight", [&] { c.loss.dice_weight = parse_real(key, v); }},
      {"loss.epsilon", [&] { c.loss.smooth_epsilon = parse_real(key, v); }},
      {"loss.prob_clamp", [&] { c.loss.prob_clamp = parse_real(key, v); }},
      {"optimizer.name", [&] { c.optimizer.kind = parse_optimizer(v); }},
      {"optimizer.lr", [&] { c.optimizer.learning_rate = parse_real(key, v); }},
      {"optimizer.weight_decay", [&] { c.optimizer.weight_decay = parse_real(key, v); }},
      {"optimizer.momentum", [&] { c.optimizer.momentum = parse_real(key, v); }},
      {"optimizer.beta1", [&] { c.optimizer.beta1 = parse_real(key, v); }},
      {"optimizer.beta2", [&] { c.optimizer.beta2 = parse_real(key, v); }},
      {"train.batch_size", [&] { c.batch_size = parse_int(key, v); }},
      {"train.max_epochs", [&] { c.max_epochs = parse_int(key, v); }},
      {"train.val_fraction", [&] { c.val_fraction = parse_real(key, v); }},
      {"train.patience", [&] { c.early_stop_patience = parse_int(key, v); }},
      {"train.seed", [&] { c.seed = parse_u64(key, v); }},
      {"train.output_dir", [&] { c.output_dir = v; }},
      {"eval.threshold", [&] { c.threshold = parse_real(key, v); }},
      {"eval.aggregation", [&] { c.aggregation = parse_aggregation(v); }},
      {"eval.use_fov", [&] { c.use_fov = parse_bool(key, v); }},
      {"data.split_file", [&] { c.data.split_file = v; }},
      {"bench.architectures", [&] { c.bench_architectures = parse_arch_list(v); }},
      {"report.montage_columns", [&] { c.montage_columns = parse_int(key, v); }},
      {"report.montage_cell", [&] { c.montage_cell = parse_int(key, v); }},
  };
  if (auto it = setters.find(key); it != setters.end()) {
    it->second();
    return;
  }
  if (auto it = root_keys().find(key); it != root_keys().end()) {
    if (v.empty()) {
      c.data.roots.erase(it->second);
    } else {
      c.data.roots[it->second] = v;
    }
    return;
  }
  const std::string per_arch = "model.pretrained_weights.";
  if (key.rfind(per_arch, 0) == 0) {
    const Architecture a = parse_architecture(key.substr(per_arch.size()));
    if (v.empty()) {
      c.pretrained_by_arch.erase(a);
    } else {
      c.pretrained_by_arch[a] = v;
    }
    return;
  }
  // loss.<arch>.<field>
  if (key.rfind("loss.", 0) == 0) {
    const auto dot = key.find('.', 5);
    if (dot != std::string::npos && loss_fields().count(key.substr(dot + 1))) {
      const Architecture a = parse_architecture(key.substr(5, dot - 5));
      auto& fields = c.loss_by_arch[a];
      if (v.empty()) {
        fields.erase(key.substr(dot + 1));
      } else {
        fields[key.substr(dot + 1)] = parse_real(key, v);
      }
      if (fields.empty()) c.loss_by_arch.erase(a);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void apply_config_text(ExperimentConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void validate(const ExperimentConfig& c) {
  validate(c.preprocess);
  validate(c.augment);
  validate(c.loss);
  for (const auto& [a, fields] : c.loss_by_arch) {
    try {
      validate(c.loss_config(a));
    } catch (const ConfigError& e) {
      throw ConfigError("loss." + arch_token(a) + ": " + e.what());
    }
  }
  validate(c.optimizer);
  if (c.batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (c.max_epochs < 1) throw ConfigError("train.max_epochs must be at least 1");
  if (!(c.val_fraction >= 0 && c.val_fraction < 1)) throw ConfigError("train.val_fraction must lie in [0, 1)");
  if (c.early_stop_patience < 1) throw ConfigError("train.patience must be at least 1");
  if (!(c.threshold > 0 && c.threshold < 1)) throw ConfigError("eval.threshold must lie in (0, 1)");
  if (c.montage_columns < 1) throw ConfigError("report.montage_columns must be at least 1");
  if (c.montage_cell < 16) throw ConfigError("report.montage_cell must be at least 16");
  try {
    for (Architecture a : kAllArchitectures) vessel::validate(c.model_spec(a));
  } catch (const SpecError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const std::optional<fs::path>& path, std::span<const std::string> overrides) {
  ExperimentConfig config;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IOError("cannot read config " + path->string());
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(config, buf.str(), path->string());
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    apply_setting(config, o.substr(0, eq), o.substr(eq + 1));
  }
  validate(config);
  return config;
}

namespace {

std::map<std::string, std::string> settings(const ExperimentConfig& c) {
  std::map<std::string, std::string> m;
  m["model.arch"] = arch_token(c.architecture);
  m["model.base_width"] = std::to_string(c.base_width);
  m["model.rdn_layers"] = std::to_string(c.rdn_layers);
  m["model.rdn_growth"] = std::to_string(c.rdn_growth);
  m["model.rse_reduction"] = std::to_string(c.rse_reduction);
  m["model.pretrained_weights"] = c.pretrained_weights ? c.pretrained_weights->string() : "";
  for (const auto& [a, p] : c.pretrained_by_arch) m["model.pretrained_weights." + arch_token(a)] = p.string();
  m["preprocess.target_size"] = std::to_string(c.preprocess.target_size);
  m["preprocess.clahe_clip"] = real_text(c.preprocess.clahe_clip_limit);
  m["preprocess.clahe_tiles"] = std::to_string(c.preprocess.clahe_tile_grid);
  m["augment.copies"] = std::to_string(c.augment.copies_per_image);
  m["augment.rotation_bound"] = real_text(c.augment.rotation_bound_degrees);
  m["augment.seed"] = std::to_string(c.augment.seed);
  m["loss.bce_weight"] = real_text(c.loss.bce_weight);
  m["loss.dice_weight"] = real_text(c.loss.dice_weight);
  m["loss.epsilon"] = real_text(c.loss.smooth_epsilon);
  m["loss.prob_clamp"] = real_text(c.loss.prob_clamp);
  for (const auto& [a, fields] : c.loss_by_arch) {
    for (const auto& [field, value] : fields) m["loss." + arch_token(a) + "." + field] = real_text(value);
  }
  m["optimizer.name"] = optimizer_token(c.optimizer.kind);
  m["optimizer.lr"] = real_text(c.optimizer.learning_rate);
  m["optimizer.weight_decay"] = real_text(c.optimizer.weight_decay);
  m["optimizer.momentum"] = real_text(c.optimizer.momentum);
  m["optimizer.beta1"] = real_text(c.optimizer.beta1);
  m["optimizer.beta2"] = real_text(c.optimizer.beta2);
  m["train.batch_size"] = std::to_string(c.batch_size);
  m["train.max_epochs"] = std::to_string(c.max_epochs);
  m["train.val_fraction"] = real_text(c.val_fraction);
  m["train.patience"] = std::to_string(c.early_stop_patience);
  m["train.seed"] = std::to_string(c.seed);
  m["train.output_dir"] = c.output_dir.string();
  m["eval.threshold"] = real_text(c.threshold);
  m["eval.aggregation"] = aggregation_token(c.aggregation);
  m["eval.use_fov"] = c.use_fov ? "true" : "false";
  for (const auto& [key, id] : root_keys()) {
    auto it = c.data.roots.find(id);
    m[key] = it == c.data.roots.end() ? "" : it->second.string();
  }
  m["data.split_file"] = c.data.split_file.string();
  std::string archs;
  for (Architecture a : c.bench_architectures) archs += (archs.empty() ? "" : ",") + arch_token(a);
  m["bench.architectures"] = archs;
  m["report.montage_columns"] = std::to_string(c.montage_columns);
  m["report.montage_cell"] = std::to_string(c.montage_cell);
  return m;
}

}  // namespace

std::string canonical_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [k, v] : settings(config)) out += k + " = " + v + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  // Locations on disk do not change what is computed, so they stay out of
  // the hash.
  std::uint64_t h = fnv1a("");
  for (const auto& [k, v] : settings(config)) {
    if (k == "train.output_dir" || root_keys().count(k)) continue;
    h = fnv1a(k + "=" + v + "\n", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vessel
