#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relnet/data.hpp"
#include "relnet/metrics.hpp"
#include "relnet/model.hpp"
#include "relnet/param_store.hpp"

namespace relnet {

struct SamplingConfig {
  int64_t tau = 16;
  double overlap = 0.8;
  int64_t tte_min = 30;
  int64_t tte_max = 60;

  std::vector<std::string> validate() const;
};

struct TrainConfig {
  int64_t epochs = 10;
  int64_t batch_size = 32;
  OptimConfig optim;
  uint64_t seed = 1;
  double threshold = 0.5;
  double split_train = 0.7, split_val = 0.15, split_test = 0.15;
  bool checkpoint_best_f1 = false;
  DType precision = DType::f32;

  std::vector<std::string> validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;          // one entry per epoch
  std::vector<MetricsReport> val_metrics;  // per epoch, when a val set exists
};

struct SampleSet {
  std::vector<ObservationSample> train, val, test;
};

// Split by sequence id (seeded by train seed), then window each split.
SampleSet prepare_samples(const std::vector<PedestrianSequence>& sequences,
                          const SamplingConfig& sampling, const TrainConfig& train);

// Seed-deterministic minibatch training; shuffling, init and batching all
// derive from cfg.seed. Returns the trained model and per-epoch history.
std::pair<IntentModel, TrainHistory> train_model(const ModelConfig& model_cfg,
                                                 const TrainConfig& cfg,
                                                 const SampleSet& samples);

struct AblationReport {
  MetricsReport relation;
  MetricsReport baseline;
  int64_t relation_param_count = 0;
  int64_t baseline_param_count = 0;
  uint64_t seed = 0;

  double delta(double MetricsReport::* field) const;
  std::string table_text() const;  // one row per variant plus a delta row
  std::string to_json(const std::string& config_hash) const;
};

// Trains both variants on identical data with identical seeds and budget,
// then evaluates both on the test split.
AblationReport ablation_compare(const ModelConfig& base_cfg, const TrainConfig& cfg,
                                const SampleSet& samples);

}  // namespace relnet
