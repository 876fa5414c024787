#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>

#include "relnet/gradcheck.hpp"
#include "relnet/ntsr.hpp"
#include "relnet/pipeline.hpp"
#include "relnet/run_config.hpp"

using namespace relnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("relnet_cfg_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const TempDir& tmp, const std::string& text) {
  const std::string p = (tmp.path / "c.json").string();
  std::ofstream f(p);
  f << text;
  return p;
}
}  // namespace

TEST_CASE("empty JSON object yields the full default configuration") {
  TempDir tmp;
  RunConfig cfg = load_config(write_config(tmp, "{}"));
  CHECK(cfg.sampling.tau == 16);
  CHECK(cfg.sampling.overlap == 0.8);
  CHECK(cfg.sampling.tte_min == 30);
  CHECK(cfg.sampling.tte_max == 60);
  CHECK(cfg.model.tau == 16);
  CHECK(cfg.model.traj_hidden == 256);
  CHECK(cfg.model.relation_dim == 256);
  CHECK(cfg.model.variant == Variant::relation);
  CHECK(cfg.scenario.scene_w == 48);
  CHECK(cfg.scenario.p_cross == 0.5);
  CHECK(cfg.train.threshold == 0.5);
  CHECK(cfg.train.optim.kind == OptimKind::adam);
}

TEST_CASE("unknown keys and bad values are rejected with field names") {
  TempDir tmp;
  CHECK_THROWS_WITH_AS(
      load_config(write_config(tmp, R"({"sampling":{"overlapp":0.5}})")),
      doctest::Contains("sampling.overlapp"), ValidationError);
  CHECK_THROWS_WITH_AS(
      load_config(write_config(tmp, R"({"sampling":{"overlap":1.5}})")),
      doctest::Contains("overlap must lie in [0,1)"), ValidationError);
  CHECK_THROWS_WITH_AS(load_config(write_config(tmp, R"({"bogus":1})")),
                       doctest::Contains("bogus"), ValidationError);
}

TEST_CASE("every violation is reported, not only the first") {
  TempDir tmp;
  try {
    load_config(write_config(
        tmp, R"({"sampling":{"overlap":1.5},"train":{"epochs":0,"threshold":2.0}})"));
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("overlap") != std::string::npos);
    CHECK(msg.find("epochs") != std::string::npos);
    CHECK(msg.find("threshold") != std::string::npos);
  }
}

TEST_CASE("syntax errors carry the line number") {
  TempDir tmp;
  CHECK_THROWS_WITH_AS(
      load_config(write_config(tmp, "{\n  \"sampling\": {\n  oops\n}")),
      doctest::Contains("line 3"), ValidationError);
  CHECK_THROWS_AS(load_config((tmp.path / "absent.json").string()), IoError);
}

TEST_CASE("cross-section invariants are enforced") {
  TempDir tmp;
  CHECK_THROWS_WITH_AS(
      load_config(write_config(tmp, R"({"model":{"tau":8}})")),
      doctest::Contains("model.tau"), ValidationError);
  CHECK_THROWS_WITH_AS(
      load_config(write_config(tmp, R"({"model":{"c":32}})")),
      doctest::Contains("last backbone block"), ValidationError);
}

TEST_CASE("serialization round-trips to an equal config") {
  TempDir tmp;
  RunConfig cfg = load_config(write_config(
      tmp,
      R"({"sampling":{"overlap":0.6},"model":{"traj_hidden":32},"train":{"seed":9}})"));
  const json j1 = to_json(cfg);
  RunConfig back = config_from_json(j1);
  CHECK(to_json(back) == j1);
  CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("config hash is stable and value-sensitive") {
  RunConfig a;
  RunConfig b;
  CHECK(config_hash(a) == config_hash(b));
  b.train.seed = 999;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("presets set the overlap ratio") {
  RunConfig cfg;
  apply_preset(cfg, "pie");
  CHECK(cfg.sampling.overlap == 0.6);
  apply_preset(cfg, "jaad");
  CHECK(cfg.sampling.overlap == 0.8);
  CHECK_THROWS_AS(apply_preset(cfg, "kitti"), ValidationError);
}

TEST_CASE("weights survive a save/load roundtrip bit-exactly") {
  TempDir tmp;
  ModelConfig cfg = miniature_config(Variant::relation);
  IntentModel m = init_intent_model(cfg, 123);
  const std::string path = (tmp.path / "w.ntsr").string();
  save_weights(m, path);
  IntentModel back = load_weights(path, cfg, DType::f32);
  for (const auto& [name, t] : m.params) CHECK(t.bit_equal(back.params.get(name)));
}

TEST_CASE("weight loading validates the parameter manifest") {
  TempDir tmp;
  ModelConfig cfg = miniature_config(Variant::relation);
  IntentModel m = init_intent_model(cfg, 5);
  const std::string path = (tmp.path / "w.ntsr").string();

  SUBCASE("missing parameter") {
    NtsrEntries entries;
    for (const auto& [name, t] : m.params)
      if (name != "temporal.bias") entries.emplace_back(name, t);
    ntsr_write(path, entries);
    CHECK_THROWS_WITH_AS(load_weights(path, cfg, DType::f32),
                         doctest::Contains("temporal.bias"), ValidationError);
  }
  SUBCASE("unexpected extra entry") {
    NtsrEntries entries;
    for (const auto& [name, t] : m.params) entries.emplace_back(name, t);
    entries.emplace_back("stowaway", Tensor::zeros({2}));
    ntsr_write(path, entries);
    CHECK_THROWS_WITH_AS(load_weights(path, cfg, DType::f32),
                         doctest::Contains("stowaway"), ValidationError);
  }
  SUBCASE("shape mismatch names the parameter") {
    NtsrEntries entries;
    for (const auto& [name, t] : m.params)
      entries.emplace_back(name, name == "temporal.bias" ? Tensor::zeros({3}) : t);
    ntsr_write(path, entries);
    CHECK_THROWS_WITH_AS(load_weights(path, cfg, DType::f32),
                         doctest::Contains("temporal.bias"), ValidationError);
  }
  SUBCASE("config/variant mismatch") {
    save_weights(m, path);
    CHECK_THROWS_AS(load_weights(path, miniature_config(Variant::no_relation),
                                 DType::f32),
                    ValidationError);
  }
}

TEST_CASE("an f64 model narrows once, then save/load/save is stable") {
  TempDir tmp;
  ModelConfig cfg = miniature_config(Variant::relation);
  IntentModel m = init_intent_model(cfg, 5, DType::f64);
  const std::string p1 = (tmp.path / "w1.ntsr").string();
  const std::string p2 = (tmp.path / "w2.ntsr").string();
  save_weights(m, p1);
  IntentModel once = load_weights(p1, cfg, DType::f64);
  save_weights(once, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}
