#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relnet/param_store.hpp"
#include "relnet/tape.hpp"
#include "relnet/tensor.hpp"

namespace relnet {

enum class Variant { relation, no_relation };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct ConvBlock {
  int64_t out_channels;
  int64_t stride;
};

// Architecture hyperparameters. Parameter names and shapes are a pure
// function of this struct (see param_manifest).
struct ModelConfig {
  int64_t tau = 16;
  int64_t frame_channels = 3;
  int64_t frame_h = 48;
  int64_t frame_w = 48;
  // 3x3 kernels, padding 1, per-block stride, ReLU after each block.
  std::vector<ConvBlock> backbone_blocks = {{64, 2}, {64, 2}, {64, 2}};
  int64_t c = 64;  // channels of f_st; must equal the last block's channels
  int64_t traj_hidden = 256;
  int64_t relation_dim = 256;  // output width of the pairwise layer
  std::vector<int64_t> classifier_hidden = {128};
  bool include_self_pairs = true;
  Variant variant = Variant::relation;

  int64_t feat_h() const;
  int64_t feat_w() const;
  int64_t cells() const { return feat_h() * feat_w(); }
  int64_t pair_count() const {
    const int64_t k = cells();
    return include_self_pairs ? k * k : k * k - k;
  }

  std::vector<std::string> validate() const;  // all violations, empty if ok
  void validate_or_throw() const;
};

struct ParamSpec {
  std::string name;
  std::vector<int64_t> shape;
  int64_t fan_in;  // 0 for biases (initialized to zero)
};

std::vector<ParamSpec> param_manifest(const ModelConfig& cfg);
int64_t param_element_count(const ModelConfig& cfg);

struct IntentModel {
  ModelConfig config;
  ParamStore params;
};

// Weights uniform in +-sqrt(1/fan_in), biases zero; each parameter draws from
// its own (seed, "init.<name>") stream.
IntentModel init_intent_model(const ModelConfig& cfg, uint64_t seed,
                              DType dtype = DType::f32);

// --- tape-level graph builders -------------------------------------------

// frames [tau,C,H,W] -> frame-level features [tau,h,w,c]
NodeId spatial_encode(Tape& t, const IntentModel& m, NodeId frames);
// [tau,h,w,c] -> [h,w,c]; one weight matrix mixes all (time, channel) inputs
// of a cell and is shared across cells.
NodeId temporal_aggregate(Tape& t, const IntentModel& m, NodeId f_s);
// normalized boxes [tau,4] -> final GRU hidden state [traj_hidden]
NodeId encode_trajectory(Tape& t, const IntentModel& m, NodeId boxes);
// f_st [h,w,c], q [traj_hidden] -> summed pairwise relation vector [relation_dim]
NodeId relation_forward(Tape& t, const IntentModel& m, NodeId f_st, NodeId q);
// ablation head: one linear layer over concat(flatten(f_st), q) -> [relation_dim]
NodeId baseline_head(Tape& t, const IntentModel& m, NodeId f_st, NodeId q);
// [relation_dim] -> pre-sigmoid logit [1]
NodeId classifier_head(Tape& t, const IntentModel& m, NodeId features);

struct ForwardNodes {
  NodeId frames, boxes;
  NodeId f_s, f_st, q;
  NodeId head;   // relation vector or baseline MLP output
  NodeId logit;  // pre-sigmoid, feeds the numerically stable loss
  NodeId prob;
};

ForwardNodes model_forward(Tape& t, const IntentModel& m, const Tensor& frames,
                           const Tensor& boxes_norm);

// --- value-level conveniences ---------------------------------------------

struct VisualFeatures {
  Tensor f_s;   // [tau,h,w,c]
  Tensor f_st;  // [h,w,c]
};

VisualFeatures compute_visual_features(const IntentModel& m, const Tensor& frames);
Tensor compute_trajectory_encoding(const IntentModel& m, const Tensor& boxes);

// Crossing probability in (0,1). predict_intent requires variant=relation,
// baseline_forward requires variant=no_relation.
double predict_intent(const IntentModel& m, const Tensor& frames,
                      const Tensor& boxes_norm);
double baseline_forward(const IntentModel& m, const Tensor& frames,
                        const Tensor& boxes_norm);
// dispatches on m.config.variant
double predict_probability(const IntentModel& m, const Tensor& frames,
                           const Tensor& boxes_norm);

}  // namespace relnet
