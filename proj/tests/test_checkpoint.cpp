#include <doctest.h>

#include <cstring>
#include <fstream>
#include <functional>

#include "support.hpp"
#include "vessel/checkpoint.hpp"
#include "vessel/errors.hpp"

using namespace vessel;
namespace fs = std::filesystem;

namespace {

ModelSpec small_spec(Architecture a) {
  ModelSpec s = default_spec(a);
  s.base_width = 8;
  return s;
}

TrainingHistory sample_history() {
  TrainingHistory h;
  h.epochs = {{0, 0.91234567890123, 0.8, 0.12, 1.5}, {1, 0.7, 0.65, 0.31, 3.25}, {2, 0.6, 0.66, 0.30, 4.0}};
  h.best_epoch = 1;
  return h;
}

// Moves the batch-norm running statistics away from their defaults.
void perturb_buffers(const ModelHandle& m) {
  Rng rng(3);
  Tensor x({2, m.spec().in_channels, 32, 32});
  for (float& v : x.values()) v = static_cast<float>(rng.uniform());
  m.net().train(true);
  m.net().forward(ag::constant(x));
  m.net().train(false);
}

void rewrite_json(const fs::path& p, const std::function<void(nlohmann::json&)>& edit) {
  nlohmann::json j;
  std::ifstream(p) >> j;
  edit(j);
  std::ofstream(p) << j.dump();
}

}  // namespace

TEST_CASE("checkpoint file names") {
  CHECK(checkpoint_name(Architecture::UnetResnet34, 42, 17) == "unet-resnet34_42_17.ckpt");
  CHECK(checkpoint_name(Architecture::DrvNet, 0, 0) == "drvnet_0_0.ckpt");
}

TEST_CASE("tensor archives round-trip exactly") {
  testing::TempDir dir;
  Tensor a({1, 2, 3, 4}), b({2, 1, 1, 1});
  Rng rng(1);
  for (float& v : a.values()) v = static_cast<float>(rng.normal());
  b.values()[0] = -0.0f;
  b.values()[1] = 3.4e38f;
  write_tensor_archive(dir / "t.vslt", {{"alpha", &a}, {"beta.gamma", &b}});
  const auto back = read_tensor_archive(dir / "t.vslt");
  REQUIRE(back.size() == 2);
  CHECK(std::memcmp(back.at("alpha").data(), a.data(), a.numel() * sizeof(float)) == 0);
  CHECK(std::memcmp(back.at("beta.gamma").data(), b.data(), b.numel() * sizeof(float)) == 0);
  CHECK(back.at("beta.gamma").shape() == Shape4{2, 1, 1, 1});
}

TEST_CASE("archive trailer is the standard 64-bit FNV-1a of the preceding bytes") {
  // Published test vectors.
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);

  testing::TempDir dir;
  Tensor t({1, 2, 1, 3});
  for (int i = 0; i < 6; ++i) t.values()[i] = 0.25f * static_cast<float>(i);
  write_tensor_archive(dir / "t.vslt", {{"w", &t}});
  std::ifstream in(dir / "t.vslt", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() > 8);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i + 8 < bytes.size(); ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t trailer = 0;
  std::memcpy(&trailer, bytes.data() + bytes.size() - 8, 8);
  CHECK(trailer == h);
}

TEST_CASE("a flipped byte or a truncated archive is an I/O error") {
  testing::TempDir dir;
  Tensor a({1, 1, 4, 4}, 0.5f);
  write_tensor_archive(dir / "t.vslt", {{"a", &a}});
  std::string bytes;
  {
    std::ifstream in(dir / "t.vslt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  std::ofstream(dir / "flipped.vslt", std::ios::binary) << flipped;
  CHECK_THROWS_AS(read_tensor_archive(dir / "flipped.vslt"), IOError);
  std::ofstream(dir / "short.vslt", std::ios::binary) << bytes.substr(0, bytes.size() - 12);
  CHECK_THROWS_AS(read_tensor_archive(dir / "short.vslt"), IOError);
  CHECK_THROWS_AS(read_tensor_archive(dir / "absent.vslt"), IOError);
}

TEST_CASE("checkpoints restore every tensor bit for bit") {
  for (Architecture arch : {Architecture::Unet, Architecture::DrvNet}) {
    INFO(arch_token(arch));
    testing::TempDir dir;
    const ModelHandle m = build_model(small_spec(arch), 11);
    perturb_buffers(m);
    const fs::path path = dir / checkpoint_name(arch, 11, 1);
    save_checkpoint(m, sample_history(), path, "abc123");
    CHECK(fs::exists(path.string() + ".json"));

    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.model.spec() == m.spec());
    CHECK(loaded.history == sample_history());
    CHECK(loaded.config_hash == "abc123");
    CHECK(loaded.model.parameter_checksum() == m.parameter_checksum());
    const auto a = model_tensors(m);
    const auto b = model_tensors(loaded.model);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      REQUIRE(a[i].second->numel() == b[i].second->numel());
      CHECK(std::memcmp(a[i].second->data(), b[i].second->data(), a[i].second->numel() * sizeof(float)) == 0);
    }

    Tensor x({1, 1, 32, 32});
    Rng rng(5);
    for (float& v : x.values()) v = static_cast<float>(rng.uniform());
    const Tensor p = forward(m, x), q = forward(loaded.model, x);
    CHECK(std::memcmp(p.data(), q.data(), p.numel() * sizeof(float)) == 0);
  }
}

TEST_CASE("a sidecar that disagrees with the archive is rejected") {
  testing::TempDir dir;
  const ModelHandle m = build_model(small_spec(Architecture::Unet), 1);
  const fs::path path = dir / "unet_1_0.ckpt";
  save_checkpoint(m, sample_history(), path);
  const fs::path side = path.string() + ".json";
  const std::string original = [&] {
    std::ifstream in(side);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  auto restore = [&] { std::ofstream(side) << original; };

  rewrite_json(side, [](nlohmann::json& j) { j["spec"]["base_width"] = 16; });
  CHECK_THROWS_AS(load_checkpoint(path), SpecMismatchError);
  restore();
  rewrite_json(side, [](nlohmann::json& j) { j["spec"]["architecture"] = "segnet"; });
  CHECK_THROWS_AS(load_checkpoint(path), SpecMismatchError);
  restore();
  rewrite_json(side, [](nlohmann::json& j) { j["spec"]["base_width"] = -3; });
  CHECK_THROWS_AS(load_checkpoint(path), SpecMismatchError);
  restore();
  rewrite_json(side, [](nlohmann::json& j) { j.erase("history"); });
  CHECK_THROWS_AS(load_checkpoint(path), SpecMismatchError);
  std::ofstream(side) << original.substr(0, original.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(path), SpecMismatchError);
  restore();
  load_checkpoint(path);
  fs::remove(side);
  CHECK_THROWS_AS(load_checkpoint(path), IOError);
}

TEST_CASE("an archive with missing or extra tensors is rejected") {
  const ModelHandle m = build_model(small_spec(Architecture::Unet), 1);
  std::map<std::string, Tensor> archive;
  for (const auto& [name, t] : model_tensors(m)) archive.emplace(name, *t);
  load_model_tensors(m, archive);
  auto extra = archive;
  extra.emplace("stray", Tensor({1, 1, 1, 1}));
  CHECK_THROWS_AS(load_model_tensors(m, extra), SpecMismatchError);
  auto missing = archive;
  missing.erase(missing.begin());
  CHECK_THROWS_AS(load_model_tensors(m, missing), SpecMismatchError);
}

TEST_CASE("unwritable checkpoint location") {
  testing::TempDir dir;
  std::ofstream(dir / "file") << "x";
  const ModelHandle m = build_model(small_spec(Architecture::Unet), 1);
  CHECK_THROWS_AS(save_checkpoint(m, {}, dir / "file" / "m.ckpt"), IOError);
}
