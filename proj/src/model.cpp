#include "relnet/model.hpp"

#include <cmath>

#include "relnet/rng.hpp"

namespace relnet {

const char* variant_name(Variant v) {
  return v == Variant::relation ? "relation" : "no_relation";
}

Variant parse_variant(const std::string& s) {
  if (s == "relation") return Variant::relation;
  if (s == "no_relation") return Variant::no_relation;
  throw ValidationError("unknown variant '" + s +
                        "' (expected relation or no_relation)");
}

namespace {
int64_t conv_dim(int64_t in, int64_t stride) {
  // 3x3 kernel, padding 1
  return (in + 2 - 3) / stride + 1;
}
}  // namespace

int64_t ModelConfig::feat_h() const {
  int64_t h = frame_h;
  for (const auto& b : backbone_blocks) h = conv_dim(h, b.stride);
  return h;
}

int64_t ModelConfig::feat_w() const {
  int64_t w = frame_w;
  for (const auto& b : backbone_blocks) w = conv_dim(w, b.stride);
  return w;
}

std::vector<std::string> ModelConfig::validate() const {
  std::vector<std::string> bad;
  if (tau < 1) bad.push_back("model.tau must be >= 1, got " + std::to_string(tau));
  if (frame_channels < 1 || frame_h < 1 || frame_w < 1)
    bad.push_back("model frame geometry must be positive");
  if (backbone_blocks.empty()) bad.push_back("model.backbone_blocks must be non-empty");
  for (const auto& b : backbone_blocks) {
    if (b.out_channels < 1 || b.stride < 1) {
      bad.push_back("model.backbone_blocks entries need positive channels/stride");
      break;
    }
  }
  if (!backbone_blocks.empty() && backbone_blocks.back().out_channels != c)
    bad.push_back("model.c (" + std::to_string(c) +
                  ") must equal the last backbone block's channels (" +
                  std::to_string(backbone_blocks.back().out_channels) + ")");
  if (c < 1) bad.push_back("model.c must be >= 1");
  if (traj_hidden < 1) bad.push_back("model.traj_hidden must be >= 1");
  if (relation_dim < 1) bad.push_back("model.relation_dim must be >= 1");
  for (int64_t wdt : classifier_hidden)
    if (wdt < 1) {
      bad.push_back("model.classifier_hidden widths must be >= 1");
      break;
    }
  if (bad.empty() && (feat_h() < 1 || feat_w() < 1))
    bad.push_back("model backbone reduces the frame to an empty feature map (" +
                  std::to_string(feat_h()) + "x" + std::to_string(feat_w()) + ")");
  return bad;
}

void ModelConfig::validate_or_throw() const {
  auto bad = validate();
  if (bad.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& b : bad) msg += "\n  - " + b;
  throw ValidationError(msg);
}

std::vector<ParamSpec> param_manifest(const ModelConfig& cfg) {
  cfg.validate_or_throw();
  std::vector<ParamSpec> specs;
  int64_t in_ch = cfg.frame_channels;
  for (size_t i = 0; i < cfg.backbone_blocks.size(); ++i) {
    const auto& b = cfg.backbone_blocks[i];
    const std::string base = "backbone.block" + std::to_string(i);
    specs.push_back({base + ".weight", {b.out_channels, in_ch, 3, 3}, in_ch * 9});
    specs.push_back({base + ".bias", {b.out_channels}, 0});
    in_ch = b.out_channels;
  }
  specs.push_back({"temporal.weight", {cfg.c, cfg.tau * cfg.c}, cfg.tau * cfg.c});
  specs.push_back({"temporal.bias", {cfg.c}, 0});
  const int64_t dh = cfg.traj_hidden;
  for (const char* gate : {"z", "r", "h"}) {
    const std::string g(gate);
    specs.push_back({"traj.gru.w_" + g, {dh, 4}, 4});
    specs.push_back({"traj.gru.u_" + g, {dh, dh}, dh});
    specs.push_back({"traj.gru.b_" + g, {dh}, 0});
  }
  if (cfg.variant == Variant::relation) {
    const int64_t in = 2 * cfg.c + dh;
    specs.push_back({"relation.g_theta.weight", {cfg.relation_dim, in}, in});
    specs.push_back({"relation.g_theta.bias", {cfg.relation_dim}, 0});
  } else {
    const int64_t in = cfg.cells() * cfg.c + dh;
    specs.push_back({"baseline.mlp.weight", {cfg.relation_dim, in}, in});
    specs.push_back({"baseline.mlp.bias", {cfg.relation_dim}, 0});
  }
  std::vector<int64_t> widths;
  widths.push_back(cfg.relation_dim);
  widths.insert(widths.end(), cfg.classifier_hidden.begin(),
                cfg.classifier_hidden.end());
  widths.push_back(1);
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string base = "classifier.l" + std::to_string(i);
    specs.push_back({base + ".weight", {widths[i + 1], widths[i]}, widths[i]});
    specs.push_back({base + ".bias", {widths[i + 1]}, 0});
  }
  return specs;
}

int64_t param_element_count(const ModelConfig& cfg) {
  int64_t n = 0;
  for (const auto& s : param_manifest(cfg)) n += shape_product(s.shape);
  return n;
}

IntentModel init_intent_model(const ModelConfig& cfg, uint64_t seed, DType dtype) {
  IntentModel m;
  m.config = cfg;
  Rng rng(seed);
  for (const auto& spec : param_manifest(cfg)) {
    Tensor t = Tensor::zeros(spec.shape, dtype);
    if (spec.fan_in > 0) {
      RngStream s = rng.stream("init." + spec.name);
      const double bound = std::sqrt(1.0 / static_cast<double>(spec.fan_in));
      for (int64_t i = 0; i < t.size(); ++i) t.set(i, s.uniform(-bound, bound));
    }
    m.params.insert(spec.name, std::move(t));
  }
  return m;
}

NodeId spatial_encode(Tape& t, const IntentModel& m, NodeId frames) {
  const ModelConfig& cfg = m.config;
  const Tensor& x = t.value(frames);
  const std::vector<int64_t> want = {cfg.tau, cfg.frame_channels, cfg.frame_h,
                                     cfg.frame_w};
  if (x.shape() != want)
    throw ValidationError("spatial_encode: frames " + x.shape_str() +
                          " do not match config " + shape_to_string(want));
  NodeId cur = frames;
  for (size_t i = 0; i < cfg.backbone_blocks.size(); ++i) {
    const std::string base = "backbone.block" + std::to_string(i);
    NodeId w = t.param(m.params, base + ".weight");
    NodeId b = t.param(m.params, base + ".bias");
    cur = t.relu(t.bias_channel(t.conv2d(cur, w, cfg.backbone_blocks[i].stride, 1), b));
  }
  // [tau,c,h,w] -> [tau,h,w,c]
  return t.permute(cur, {0, 2, 3, 1});
}

NodeId temporal_aggregate(Tape& t, const IntentModel& m, NodeId f_s) {
  const ModelConfig& cfg = m.config;
  const Tensor& v = t.value(f_s);
  const std::vector<int64_t> want = {cfg.tau, cfg.feat_h(), cfg.feat_w(), cfg.c};
  if (v.shape() != want)
    throw ValidationError("temporal_aggregate: f_s " + v.shape_str() +
                          " does not match config " + shape_to_string(want));
  // per cell, flatten (time, channel) and mix with one shared matrix
  NodeId cells = t.reshape(t.permute(f_s, {1, 2, 0, 3}),
                           {cfg.cells(), cfg.tau * cfg.c});
  NodeId out = t.linear(cells, t.param(m.params, "temporal.weight"),
                        t.param(m.params, "temporal.bias"));
  return t.reshape(out, {cfg.feat_h(), cfg.feat_w(), cfg.c});
}

NodeId encode_trajectory(Tape& t, const IntentModel& m, NodeId boxes) {
  const ModelConfig& cfg = m.config;
  const Tensor& v = t.value(boxes);
  if (v.shape() != std::vector<int64_t>{cfg.tau, 4})
    throw ValidationError("encode_trajectory: boxes " + v.shape_str() +
                          " do not match [" + std::to_string(cfg.tau) + "x4]");
  GruCellParams p{
      t.param(m.params, "traj.gru.w_z"), t.param(m.params, "traj.gru.u_z"),
      t.param(m.params, "traj.gru.b_z"), t.param(m.params, "traj.gru.w_r"),
      t.param(m.params, "traj.gru.u_r"), t.param(m.params, "traj.gru.b_r"),
      t.param(m.params, "traj.gru.w_h"), t.param(m.params, "traj.gru.u_h"),
      t.param(m.params, "traj.gru.b_h")};
  NodeId h = t.leaf(Tensor::zeros({1, cfg.traj_hidden}, v.dtype()));
  for (int64_t step = 0; step < cfg.tau; ++step)
    h = gru_cell_step(t, t.slice_row(boxes, step), h, p);
  return t.reshape(h, {cfg.traj_hidden});
}

NodeId relation_forward(Tape& t, const IntentModel& m, NodeId f_st, NodeId q) {
  const ModelConfig& cfg = m.config;
  const Tensor& v = t.value(f_st);
  const std::vector<int64_t> want = {cfg.feat_h(), cfg.feat_w(), cfg.c};
  if (v.shape() != want)
    throw ValidationError("relation_forward: f_st " + v.shape_str() +
                          " does not match config " + shape_to_string(want));
  if (t.value(q).shape() != std::vector<int64_t>{cfg.traj_hidden})
    throw ValidationError("relation_forward: q " + t.value(q).shape_str() +
                          " does not match traj_hidden " +
                          std::to_string(cfg.traj_hidden));
  NodeId cells = t.reshape(f_st, {cfg.cells(), cfg.c});
  NodeId pairs = t.pair_concat(cells, q, cfg.include_self_pairs);
  NodeId scored = t.linear(pairs, t.param(m.params, "relation.g_theta.weight"),
                           t.param(m.params, "relation.g_theta.bias"));
  // sum over pairs; the aggregation transform is the identity
  return t.row_sum(scored);
}

NodeId baseline_head(Tape& t, const IntentModel& m, NodeId f_st, NodeId q) {
  const ModelConfig& cfg = m.config;
  NodeId flat = t.reshape(f_st, {cfg.cells() * cfg.c});
  NodeId joined = t.reshape(t.concat0({flat, q}),
                            {1, cfg.cells() * cfg.c + cfg.traj_hidden});
  NodeId out = t.linear(joined, t.param(m.params, "baseline.mlp.weight"),
                        t.param(m.params, "baseline.mlp.bias"));
  return t.reshape(out, {cfg.relation_dim});
}

NodeId classifier_head(Tape& t, const IntentModel& m, NodeId features) {
  const ModelConfig& cfg = m.config;
  NodeId cur = t.reshape(features, {1, cfg.relation_dim});
  const size_t layers = cfg.classifier_hidden.size() + 1;
  for (size_t i = 0; i < layers; ++i) {
    const std::string base = "classifier.l" + std::to_string(i);
    cur = t.linear(cur, t.param(m.params, base + ".weight"),
                   t.param(m.params, base + ".bias"));
    if (i + 1 < layers) cur = t.relu(cur);
  }
  return t.reshape(cur, {1});
}

ForwardNodes model_forward(Tape& t, const IntentModel& m, const Tensor& frames,
                           const Tensor& boxes_norm) {
  ForwardNodes fn;
  fn.frames = t.leaf(frames);
  fn.boxes = t.leaf(boxes_norm);
  fn.f_s = spatial_encode(t, m, fn.frames);
  fn.f_st = temporal_aggregate(t, m, fn.f_s);
  fn.q = encode_trajectory(t, m, fn.boxes);
  fn.head = m.config.variant == Variant::relation
                ? relation_forward(t, m, fn.f_st, fn.q)
                : baseline_head(t, m, fn.f_st, fn.q);
  fn.logit = classifier_head(t, m, fn.head);
  fn.prob = t.sigmoid(fn.logit);
  return fn;
}

VisualFeatures compute_visual_features(const IntentModel& m, const Tensor& frames) {
  Tape t;
  NodeId f = t.leaf(frames);
  NodeId f_s = spatial_encode(t, m, f);
  NodeId f_st = temporal_aggregate(t, m, f_s);
  return {t.value(f_s), t.value(f_st)};
}

Tensor compute_trajectory_encoding(const IntentModel& m, const Tensor& boxes) {
  Tape t;
  return t.value(encode_trajectory(t, m, t.leaf(boxes)));
}

static double forward_probability(const IntentModel& m, const Tensor& frames,
                                  const Tensor& boxes_norm) {
  Tape t;
  return t.value(model_forward(t, m, frames, boxes_norm).prob).at(0);
}

double predict_intent(const IntentModel& m, const Tensor& frames,
                      const Tensor& boxes_norm) {
  if (m.config.variant != Variant::relation)
    throw ValidationError("predict_intent requires variant=relation, model is " +
                          std::string(variant_name(m.config.variant)));
  return forward_probability(m, frames, boxes_norm);
}

double baseline_forward(const IntentModel& m, const Tensor& frames,
                        const Tensor& boxes_norm) {
  if (m.config.variant != Variant::no_relation)
    throw ValidationError("baseline_forward requires variant=no_relation, model is " +
                          std::string(variant_name(m.config.variant)));
  return forward_probability(m, frames, boxes_norm);
}

double predict_probability(const IntentModel& m, const Tensor& frames,
                           const Tensor& boxes_norm) {
  return m.config.variant == Variant::relation
             ? predict_intent(m, frames, boxes_norm)
             : baseline_forward(m, frames, boxes_norm);
}

}  // namespace relnet
