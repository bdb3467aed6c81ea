#include "vessel/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

#include "vessel/errors.hpp"
#include "vessel/rng.hpp"

namespace vessel {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'L', 'T'};
constexpr std::uint32_t kVersion = 1;

class HashingWriter {
 public:
  explicit HashingWriter(std::ofstream& out) : out_(out) {}
  void write(const void* data, std::size_t size) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    hash_ = fnv1a(std::string_view(static_cast<const char*>(data), size), hash_);
  }
  template <class T>
  void put(const T& v) { write(&v, sizeof(T)); }
  std::uint64_t hash() const { return hash_; }

 private:
  std::ofstream& out_;
  std::uint64_t hash_ = kFnvOffset;
};

class HashingReader {
 public:
  HashingReader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}
  void read(void* data, std::size_t size) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (!in_) throw IOError("truncated tensor archive " + path_.string());
    hash_ = fnv1a(std::string_view(static_cast<const char*>(data), size), hash_);
  }
  template <class T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::ifstream& in_;
  const std::filesystem::path& path_;
  std::uint64_t hash_ = kFnvOffset;
};

}  // namespace

void write_tensor_archive(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  HashingWriter w(out);
  w.write(kMagic, 4);
  w.put(kVersion);
  w.put(static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.put(static_cast<std::uint32_t>(name.size()));
    w.write(name.data(), name.size());
    const Shape4& s = t->shape();
    for (std::int32_t d : {s.n, s.c, s.h, s.w}) w.put(d);
    w.write(t->data(), t->numel() * sizeof(float));
  }
  const std::uint64_t trailer = w.hash();
  out.write(reinterpret_cast<const char*>(&trailer), sizeof(trailer));
  if (!out) throw IOError("failed writing " + path.string());
}

std::map<std::string, Tensor> read_tensor_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  HashingReader r(in, path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IOError(path.string() + " is not a tensor archive");
  if (r.get<std::uint32_t>() != kVersion) throw IOError("unsupported archive version in " + path.string());
  const auto count = r.get<std::uint64_t>();
  std::map<std::string, Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    if (len > 4096) throw IOError("corrupt tensor name in " + path.string());
    std::string name(len, '\0');
    r.read(name.data(), len);
    Shape4 s;
    s.n = r.get<std::int32_t>();
    s.c = r.get<std::int32_t>();
    s.h = r.get<std::int32_t>();
    s.w = r.get<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() > (1ULL << 32)) {
      throw IOError("corrupt tensor shape in " + path.string());
    }
    Tensor t(s);
    r.read(t.data(), t.numel() * sizeof(float));
    out.emplace(std::move(name), std::move(t));
  }
  const std::uint64_t expected = r.hash();
  std::uint64_t trailer = 0;
  in.read(reinterpret_cast<char*>(&trailer), sizeof(trailer));
  if (!in || trailer != expected) throw IOError("checksum mismatch in " + path.string());
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> model_tensors(const ModelHandle& model) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (const auto& p : model.net().named_parameters()) out.emplace_back(p.name, &p.var->value);
  for (const auto& b : model.net().named_buffers()) out.emplace_back(b.name, b.tensor);
  return out;
}

void load_model_tensors(const ModelHandle& model, const std::map<std::string, Tensor>& archive) {
  auto assign = [&](const std::string& name, Tensor& dst) {
    auto it = archive.find(name);
    if (it == archive.end()) throw SpecMismatchError("archive lacks tensor " + name);
    if (!(it->second.shape() == dst.shape())) {
      throw SpecMismatchError("tensor " + name + " has shape " + it->second.shape().str() +
                              ", model expects " + dst.shape().str());
    }
    dst = it->second;
  };
  std::size_t expected = 0;
  for (const auto& p : model.net().named_parameters()) {
    assign(p.name, p.var->value);
    ++expected;
  }
  for (const auto& b : model.net().named_buffers()) {
    assign(b.name, *b.tensor);
    ++expected;
  }
  if (expected != archive.size()) {
    throw SpecMismatchError("archive holds " + std::to_string(archive.size()) +
                            " tensors, model has " + std::to_string(expected));
  }
}

nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["architecture"] = arch_token(spec.architecture);
  j["in_channels"] = spec.in_channels;
  j["base_width"] = spec.base_width;
  j["rdn_layers"] = spec.rdn_layers;
  j["rdn_growth"] = spec.rdn_growth;
  j["rse_reduction"] = spec.rse_reduction;
  j["pretrained_weights"] = spec.pretrained_weights ? nlohmann::json(spec.pretrained_weights->string())
                                                     : nlohmann::json(nullptr);
  return j;
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.architecture = parse_architecture(j.at("architecture").get<std::string>());
  spec.in_channels = j.at("in_channels").get<int>();
  spec.base_width = j.at("base_width").get<int>();
  spec.rdn_layers = j.at("rdn_layers").get<int>();
  spec.rdn_growth = j.at("rdn_growth").get<int>();
  spec.rse_reduction = j.at("rse_reduction").get<int>();
  if (j.contains("pretrained_weights") && !j["pretrained_weights"].is_null()) {
    spec.pretrained_weights = j["pretrained_weights"].get<std::string>();
  }
  return spec;
}

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"val_f1", r.val_f1},
          {"wall_seconds", r.wall_seconds}};
}

EpochRecord epoch_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.train_loss = j.at("train_loss").get<double>();
  r.val_loss = j.at("val_loss").get<double>();
  r.val_f1 = j.at("val_f1").get<double>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

std::string checkpoint_name(Architecture arch, std::uint64_t seed, int epoch) {
  return arch_token(arch) + "_" + std::to_string(seed) + "_" + std::to_string(epoch) + ".ckpt";
}

void save_checkpoint(const ModelHandle& model, const TrainingHistory& history,
                     const std::filesystem::path& path, const std::string& config_hash) {
  write_tensor_archive(path, model_tensors(model));
  nlohmann::json side;
  side["format"] = 1;
  side["spec"] = to_json(model.spec());
  side["config_hash"] = config_hash;
  side["parameter_count"] = model.parameter_count();
  side["best_epoch"] = history.best_epoch;
  side["history"] = nlohmann::json::array();
  for (const auto& r : history.epochs) side["history"].push_back(to_json(r));
  std::ofstream out(path.string() + ".json", std::ios::trunc);
  if (!out) throw IOError("cannot write sidecar for " + path.string());
  out << side.dump(2) << "\n";
  if (!out) throw IOError("failed writing sidecar for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::filesystem::path sidecar = path.string() + ".json";
  std::ifstream in(sidecar);
  if (!in) throw IOError("cannot open sidecar " + sidecar.string());
  nlohmann::json side;
  ModelSpec spec;
  TrainingHistory history;
  std::string hash;
  try {
    in >> side;
    spec = spec_from_json(side.at("spec"));
    validate(spec);
    history.best_epoch = side.at("best_epoch").get<int>();
    for (const auto& r : side.at("history")) history.epochs.push_back(epoch_from_json(r));
    hash = side.value("config_hash", "");
  } catch (const nlohmann::json::exception& e) {
    throw SpecMismatchError("corrupt sidecar " + sidecar.string() + ": " + e.what());
  } catch (const SpecError& e) {
    throw SpecMismatchError(std::string("sidecar spec invalid: ") + e.what());
  } catch (const ConfigError& e) {
    throw SpecMismatchError(std::string("sidecar spec invalid: ") + e.what());
  }
  // The archive supplies every value, so pretrained encoder files are not read.
  ModelHandle model = build_model(spec, 0, /*load_pretrained=*/false);
  load_model_tensors(model, read_tensor_archive(path));
  LoadedCheckpoint out{std::move(model), std::move(history), hash};
  return out;
}

}  // namespace vessel
