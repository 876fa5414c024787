#include "relnet/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "relnet/rng.hpp"

namespace relnet {

using nlohmann::json;

RunConfig default_run_config() { return RunConfig{}; }

json to_json(const RunConfig& cfg) {
  json blocks = json::array();
  for (const auto& b : cfg.model.backbone_blocks)
    blocks.push_back({b.out_channels, b.stride});
  return json{
      {"scenario",
       {{"scene_w", cfg.scenario.scene_w},
        {"scene_h", cfg.scenario.scene_h},
        {"track_len", cfg.scenario.track_len},
        {"num_sequences", cfg.num_sequences},
        {"num_vehicles_min", cfg.scenario.num_vehicles_min},
        {"num_vehicles_max", cfg.scenario.num_vehicles_max},
        {"speed_min", cfg.scenario.speed_min},
        {"speed_max", cfg.scenario.speed_max},
        {"v_yield", cfg.scenario.v_yield},
        {"d_near", cfg.scenario.d_near},
        {"p_cross", cfg.scenario.p_cross},
        {"seed", cfg.scenario.seed}}},
      {"sampling",
       {{"tau", cfg.sampling.tau},
        {"overlap", cfg.sampling.overlap},
        {"tte_min", cfg.sampling.tte_min},
        {"tte_max", cfg.sampling.tte_max}}},
      {"model",
       {{"tau", cfg.model.tau},
        {"frame_channels", cfg.model.frame_channels},
        {"frame_h", cfg.model.frame_h},
        {"frame_w", cfg.model.frame_w},
        {"backbone_blocks", blocks},
        {"c", cfg.model.c},
        {"traj_hidden", cfg.model.traj_hidden},
        {"relation_dim", cfg.model.relation_dim},
        {"classifier_hidden", cfg.model.classifier_hidden},
        {"include_self_pairs", cfg.model.include_self_pairs},
        {"variant", variant_name(cfg.model.variant)}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"optimizer", cfg.train.optim.kind == OptimKind::adam ? "adam" : "sgd"},
        {"lr", cfg.train.optim.lr},
        {"beta1", cfg.train.optim.beta1},
        {"beta2", cfg.train.optim.beta2},
        {"eps_adam", cfg.train.optim.eps},
        {"seed", cfg.train.seed},
        {"threshold", cfg.train.threshold},
        {"split",
         {cfg.train.split_train, cfg.train.split_val, cfg.train.split_test}},
        {"checkpoint_best_f1", cfg.train.checkpoint_best_f1},
        {"precision", cfg.train.precision == DType::f32 ? "f32" : "f64"}}},
      {"io",
       {{"dataset_dir", cfg.io.dataset_dir},
        {"weights_path", cfg.io.weights_path},
        {"report_path", cfg.io.report_path},
        {"history_path", cfg.io.history_path}}}};
}

namespace {

// Track problems instead of failing fast so one pass reports everything.
struct Problems {
  std::vector<std::string> list;
  void add(const std::string& p) { list.push_back(p); }
  void add_all(const std::vector<std::string>& ps) {
    list.insert(list.end(), ps.begin(), ps.end());
  }
};

void check_unknown_keys(const json& obj, const std::string& section,
                        const std::set<std::string>& allowed, Problems& bad) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      bad.add("unknown key '" + section + it.key() + "'");
}

template <typename T>
void fetch(const json& obj, const std::string& section, const char* key, T& out,
           Problems& bad) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad.add("key '" + section + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  Problems bad;
  if (!j.is_object()) throw ValidationError("config root must be a JSON object");
  check_unknown_keys(j, "", {"scenario", "sampling", "model", "train", "io"}, bad);

  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    check_unknown_keys(s, "scenario.",
                       {"scene_w", "scene_h", "track_len", "num_sequences",
                        "num_vehicles_min", "num_vehicles_max", "speed_min",
                        "speed_max", "v_yield", "d_near", "p_cross", "seed"},
                       bad);
    fetch(s, "scenario.", "scene_w", cfg.scenario.scene_w, bad);
    fetch(s, "scenario.", "scene_h", cfg.scenario.scene_h, bad);
    fetch(s, "scenario.", "track_len", cfg.scenario.track_len, bad);
    fetch(s, "scenario.", "num_sequences", cfg.num_sequences, bad);
    fetch(s, "scenario.", "num_vehicles_min", cfg.scenario.num_vehicles_min, bad);
    fetch(s, "scenario.", "num_vehicles_max", cfg.scenario.num_vehicles_max, bad);
    fetch(s, "scenario.", "speed_min", cfg.scenario.speed_min, bad);
    fetch(s, "scenario.", "speed_max", cfg.scenario.speed_max, bad);
    fetch(s, "scenario.", "v_yield", cfg.scenario.v_yield, bad);
    fetch(s, "scenario.", "d_near", cfg.scenario.d_near, bad);
    fetch(s, "scenario.", "p_cross", cfg.scenario.p_cross, bad);
    fetch(s, "scenario.", "seed", cfg.scenario.seed, bad);
  }

  if (j.contains("sampling")) {
    const json& s = j.at("sampling");
    check_unknown_keys(s, "sampling.", {"tau", "overlap", "tte_min", "tte_max"}, bad);
    fetch(s, "sampling.", "tau", cfg.sampling.tau, bad);
    fetch(s, "sampling.", "overlap", cfg.sampling.overlap, bad);
    fetch(s, "sampling.", "tte_min", cfg.sampling.tte_min, bad);
    fetch(s, "sampling.", "tte_max", cfg.sampling.tte_max, bad);
  }

  if (j.contains("model")) {
    const json& s = j.at("model");
    check_unknown_keys(s, "model.",
                       {"tau", "frame_channels", "frame_h", "frame_w",
                        "backbone_blocks", "c", "traj_hidden", "relation_dim",
                        "classifier_hidden", "include_self_pairs", "variant"},
                       bad);
    fetch(s, "model.", "tau", cfg.model.tau, bad);
    fetch(s, "model.", "frame_channels", cfg.model.frame_channels, bad);
    fetch(s, "model.", "frame_h", cfg.model.frame_h, bad);
    fetch(s, "model.", "frame_w", cfg.model.frame_w, bad);
    if (s.contains("backbone_blocks")) {
      try {
        cfg.model.backbone_blocks.clear();
        for (const auto& b : s.at("backbone_blocks"))
          cfg.model.backbone_blocks.push_back(
              {b.at(0).get<int64_t>(), b.at(1).get<int64_t>()});
      } catch (const json::exception&) {
        bad.add("model.backbone_blocks must be a list of [channels, stride] pairs");
      }
    }
    fetch(s, "model.", "c", cfg.model.c, bad);
    fetch(s, "model.", "traj_hidden", cfg.model.traj_hidden, bad);
    fetch(s, "model.", "relation_dim", cfg.model.relation_dim, bad);
    fetch(s, "model.", "classifier_hidden", cfg.model.classifier_hidden, bad);
    fetch(s, "model.", "include_self_pairs", cfg.model.include_self_pairs, bad);
    if (s.contains("variant")) {
      try {
        cfg.model.variant = parse_variant(s.at("variant").get<std::string>());
      } catch (const std::exception& e) {
        bad.add(std::string("model.variant: ") + e.what());
      }
    }
  }

  if (j.contains("train")) {
    const json& s = j.at("train");
    check_unknown_keys(s, "train.",
                       {"epochs", "batch_size", "optimizer", "lr", "beta1", "beta2",
                        "eps_adam", "seed", "threshold", "split",
                        "checkpoint_best_f1", "precision"},
                       bad);
    fetch(s, "train.", "epochs", cfg.train.epochs, bad);
    fetch(s, "train.", "batch_size", cfg.train.batch_size, bad);
    if (s.contains("optimizer")) {
      std::string kind;
      fetch(s, "train.", "optimizer", kind, bad);
      if (kind == "adam") cfg.train.optim.kind = OptimKind::adam;
      else if (kind == "sgd") cfg.train.optim.kind = OptimKind::sgd;
      else bad.add("train.optimizer must be 'adam' or 'sgd', got '" + kind + "'");
    }
    fetch(s, "train.", "lr", cfg.train.optim.lr, bad);
    fetch(s, "train.", "beta1", cfg.train.optim.beta1, bad);
    fetch(s, "train.", "beta2", cfg.train.optim.beta2, bad);
    fetch(s, "train.", "eps_adam", cfg.train.optim.eps, bad);
    fetch(s, "train.", "seed", cfg.train.seed, bad);
    fetch(s, "train.", "threshold", cfg.train.threshold, bad);
    if (s.contains("split")) {
      std::vector<double> split;
      fetch(s, "train.", "split", split, bad);
      if (split.size() == 3) {
        cfg.train.split_train = split[0];
        cfg.train.split_val = split[1];
        cfg.train.split_test = split[2];
      } else {
        bad.add("train.split must hold exactly 3 ratios");
      }
    }
    fetch(s, "train.", "checkpoint_best_f1", cfg.train.checkpoint_best_f1, bad);
    if (s.contains("precision")) {
      std::string p;
      fetch(s, "train.", "precision", p, bad);
      if (p == "f32") cfg.train.precision = DType::f32;
      else if (p == "f64") cfg.train.precision = DType::f64;
      else bad.add("train.precision must be 'f32' or 'f64', got '" + p + "'");
    }
  }

  if (j.contains("io")) {
    const json& s = j.at("io");
    check_unknown_keys(
        s, "io.", {"dataset_dir", "weights_path", "report_path", "history_path"},
        bad);
    fetch(s, "io.", "dataset_dir", cfg.io.dataset_dir, bad);
    fetch(s, "io.", "weights_path", cfg.io.weights_path, bad);
    fetch(s, "io.", "report_path", cfg.io.report_path, bad);
    fetch(s, "io.", "history_path", cfg.io.history_path, bad);
  }

  if (bad.list.empty()) {
    bad.add_all(cfg.scenario.validate());
    bad.add_all(cfg.sampling.validate());
    bad.add_all(cfg.model.validate());
    bad.add_all(cfg.train.validate());
    if (cfg.num_sequences < 1) bad.add("scenario.num_sequences must be >= 1");
    if (cfg.model.tau != cfg.sampling.tau)
      bad.add("model.tau (" + std::to_string(cfg.model.tau) +
              ") must equal sampling.tau (" + std::to_string(cfg.sampling.tau) + ")");
    if (cfg.model.frame_h != cfg.scenario.scene_h ||
        cfg.model.frame_w != cfg.scenario.scene_w)
      bad.add("model frame geometry must match the scenario scene size");
  }

  if (!bad.list.empty()) {
    std::string msg = "invalid config:";
    for (const auto& b : bad.list) msg += "\n  - " + b;
    throw ValidationError(msg);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    size_t line = 1;
    for (size_t i = 0; i < std::min(text.size(), static_cast<size_t>(e.byte)); ++i)
      if (text[i] == '\n') ++line;
    throw ValidationError("config syntax error at line " + std::to_string(line) +
                          " of " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_preset(RunConfig& cfg, const std::string& preset) {
  if (preset == "pie") cfg.sampling.overlap = 0.6;
  else if (preset == "jaad") cfg.sampling.overlap = 0.8;
  else throw ValidationError("unknown preset '" + preset + "' (pie or jaad)");
}

std::string config_hash(const RunConfig& cfg) {
  const uint64_t h = fnv1a64(to_json(cfg).dump());
  std::ostringstream os;
  os << std::hex;
  for (int i = 15; i >= 0; --i) os << ((h >> (4 * i)) & 0xf);
  return os.str();
}

}  // namespace relnet
