#pragma once

#include <string>

#include "relnet/run_config.hpp"

namespace relnet {

// One NTSR entry per parameter; values always stored as f32 (f64 models are
// narrowed on save, so save/load/save is idempotent).
void save_weights(const IntentModel& model, const std::string& path);
// Validates the file's name/shape manifest against the config before
// accepting; extra, missing or misshapen entries are named in the error.
IntentModel load_weights(const std::string& path, const ModelConfig& cfg,
                         DType precision);

// CLI-facing runs. Each writes its artifacts per cfg.io and returns reports
// that embed the config hash and seed.
void run_gen(const RunConfig& cfg);
void run_train(const RunConfig& cfg);
MetricsReport run_eval(const RunConfig& cfg);
AblationReport run_ablate(const RunConfig& cfg);
// Returns true when both variants pass the 1e-4 bound.
bool run_gradcheck(bool verbose = true);

}  // namespace relnet
