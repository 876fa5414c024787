#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "relnet/data.hpp"
#include "relnet/model.hpp"
#include "relnet/train.hpp"

namespace relnet {

// Whole-run configuration. Every field has a default; unknown JSON keys are
// rejected and all invariant violations are reported together.
struct RunConfig {
  ScenarioParams scenario;
  int64_t num_sequences = 32;  // sequences generated by `gen`
  SamplingConfig sampling;
  ModelConfig model;
  TrainConfig train;
  struct Io {
    std::string dataset_dir = "data";
    std::string weights_path = "weights.ntsr";
    std::string report_path = "report.json";
    std::string history_path = "history.json";
  } io;
};

RunConfig default_run_config();

nlohmann::json to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

// Reads, defaults, and validates; throws IoError for unreadable files,
// ValidationError (with every violation listed) otherwise.
RunConfig load_config(const std::string& path);

// sampling overlap presets: pie = 0.6, jaad = 0.8
void apply_preset(RunConfig& cfg, const std::string& preset);

// FNV-1a over the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace relnet
