#include "relnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relnet/rng.hpp"
#include "relnet/tape.hpp"

namespace relnet {

using nlohmann::json;

std::vector<std::string> SamplingConfig::validate() const {
  std::vector<std::string> bad;
  if (tau < 1) bad.push_back("sampling.tau must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0))
    bad.push_back("sampling.overlap must lie in [0,1), got " + std::to_string(overlap));
  if (tte_min < 0 || tte_max < tte_min)
    bad.push_back("sampling requires 0 <= tte_min <= tte_max");
  return bad;
}

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (epochs < 1) bad.push_back("train.epochs must be >= 1");
  if (batch_size < 1) bad.push_back("train.batch_size must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0))
    bad.push_back("train.threshold must lie strictly between 0 and 1");
  if (!(optim.lr >= 0.0)) bad.push_back("train.lr must be >= 0");
  if (!(split_train > 0 && split_val > 0 && split_test > 0))
    bad.push_back("train.split ratios must be positive");
  else if (std::abs(split_train + split_val + split_test - 1.0) > 1e-9)
    bad.push_back("train.split ratios must sum to 1");
  return bad;
}

SampleSet prepare_samples(const std::vector<PedestrianSequence>& sequences,
                          const SamplingConfig& sampling, const TrainConfig& train) {
  SplitIds ids = split_dataset(sequences, train.split_train, train.split_val,
                               train.split_test, train.seed);
  const auto in = [](const std::vector<std::string>& v, const std::string& id) {
    return std::find(v.begin(), v.end(), id) != v.end();
  };
  SampleSet out;
  for (const auto& seq : sequences) {
    auto windows = subsample_tte(seq, sampling.tau, sampling.overlap,
                                 sampling.tte_min, sampling.tte_max);
    auto& dst = in(ids.train, seq.id) ? out.train
                : in(ids.val, seq.id) ? out.val
                                      : out.test;
    for (auto& w : windows) dst.push_back(std::move(w));
  }
  return out;
}

namespace {

void check_geometry(const ModelConfig& cfg, const std::vector<ObservationSample>& ss,
                    const char* which) {
  const std::vector<int64_t> fshape = {cfg.tau, cfg.frame_channels, cfg.frame_h,
                                       cfg.frame_w};
  for (const auto& s : ss) {
    if (s.frames.shape() != fshape)
      throw ValidationError(std::string("train: ") + which + " sample frames " +
                            s.frames.shape_str() + " do not match model " +
                            shape_to_string(fshape));
    if (s.boxes_norm.shape() != std::vector<int64_t>{cfg.tau, 4})
      throw ValidationError(std::string("train: ") + which + " sample boxes " +
                            s.boxes_norm.shape_str() + " do not match tau");
  }
}

}  // namespace

std::pair<IntentModel, TrainHistory> train_model(const ModelConfig& model_cfg,
                                                 const TrainConfig& cfg,
                                                 const SampleSet& samples) {
  model_cfg.validate_or_throw();
  if (samples.train.empty()) throw ValidationError("train: no training samples");
  check_geometry(model_cfg, samples.train, "train");
  check_geometry(model_cfg, samples.val, "val");
  check_geometry(model_cfg, samples.test, "test");

  const DType dt = cfg.precision;
  IntentModel model = init_intent_model(model_cfg, cfg.seed, dt);
  OptimState state = make_optim_state(model.params, cfg.optim.kind);
  Rng rng(cfg.seed);
  TrainHistory history;

  // samples converted once; reused every epoch
  std::vector<Tensor> frames, boxes;
  Tensor all_labels = Tensor::zeros({static_cast<int64_t>(samples.train.size())},
                                    dt);
  frames.reserve(samples.train.size());
  boxes.reserve(samples.train.size());
  for (size_t i = 0; i < samples.train.size(); ++i) {
    frames.push_back(samples.train[i].frames.astype(dt));
    boxes.push_back(samples.train[i].boxes_norm.astype(dt));
    all_labels.set(static_cast<int64_t>(i), samples.train[i].label);
  }

  ParamStore best_params;
  double best_f1 = -1.0;

  std::vector<size_t> order(samples.train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle = rng.stream("shuffle", static_cast<uint64_t>(epoch));
    shuffle.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      const int64_t bsz = static_cast<int64_t>(end - start);
      Tape t;
      std::vector<NodeId> logits;
      Tensor batch_labels = Tensor::zeros({bsz}, dt);
      for (size_t k = start; k < end; ++k) {
        const size_t i = order[k];
        logits.push_back(model_forward(t, model, frames[i], boxes[i]).logit);
        batch_labels.set(static_cast<int64_t>(k - start), all_labels.at(
                             static_cast<int64_t>(i)));
      }
      NodeId per = t.bce_with_logits(t.concat0(logits), batch_labels);
      NodeId loss = t.affine(t.sum_all(per), 1.0 / static_cast<double>(bsz), 0.0);
      loss_sum += t.value(loss).at(0) * static_cast<double>(bsz);
      auto grads = t.backward(loss, model.params);
      optimizer_step(model.params, grads, state, cfg.optim);
    }
    history.train_loss.push_back(loss_sum / static_cast<double>(order.size()));

    if (!samples.val.empty()) {
      history.val_metrics.push_back(evaluate(model, samples.val, cfg.threshold));
      if (cfg.checkpoint_best_f1 && history.val_metrics.back().f1 > best_f1) {
        best_f1 = history.val_metrics.back().f1;
        best_params = model.params;
      }
    }
  }

  if (cfg.checkpoint_best_f1 && best_f1 >= 0.0) model.params = best_params;
  return {std::move(model), std::move(history)};
}

double AblationReport::delta(double MetricsReport::* field) const {
  return relation.*field - baseline.*field;
}

std::string AblationReport::table_text() const {
  std::ostringstream os;
  const auto row = [&](const std::string& name, double a, double b, double c,
                       double d, double e) {
    os << name;
    for (size_t i = name.size(); i < 16; ++i) os << ' ';
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%8.4f %8.4f %8.4f %8.4f %8.4f\n", a, b, c, d, e);
    os << buf;
  };
  os << "method               Acc      AUC       F1        P        R\n";
  row("relation", relation.accuracy, relation.auc, relation.f1, relation.precision,
      relation.recall);
  row("no_relation", baseline.accuracy, baseline.auc, baseline.f1,
      baseline.precision, baseline.recall);
  row("delta", delta(&MetricsReport::accuracy), delta(&MetricsReport::auc),
      delta(&MetricsReport::f1), delta(&MetricsReport::precision),
      delta(&MetricsReport::recall));
  os << "params: relation=" << relation_param_count
     << " no_relation=" << baseline_param_count << "\n";
  return os.str();
}

std::string AblationReport::to_json(const std::string& config_hash) const {
  json j{{"seed", seed},
         {"config_hash", config_hash},
         {"relation", json::parse(relation.to_json())},
         {"no_relation", json::parse(baseline.to_json())},
         {"delta",
          {{"accuracy", delta(&MetricsReport::accuracy)},
           {"auc", delta(&MetricsReport::auc)},
           {"f1", delta(&MetricsReport::f1)},
           {"precision", delta(&MetricsReport::precision)},
           {"recall", delta(&MetricsReport::recall)}}},
         {"relation_param_count", relation_param_count},
         {"baseline_param_count", baseline_param_count}};
  return j.dump(2);
}

AblationReport ablation_compare(const ModelConfig& base_cfg, const TrainConfig& cfg,
                                const SampleSet& samples) {
  if (samples.test.empty())
    throw ValidationError("ablation_compare: empty test split");
  AblationReport report;
  report.seed = cfg.seed;

  ModelConfig rel_cfg = base_cfg;
  rel_cfg.variant = Variant::relation;
  ModelConfig base2 = base_cfg;
  base2.variant = Variant::no_relation;

  auto [rel_model, rel_hist] = train_model(rel_cfg, cfg, samples);
  report.relation = evaluate(rel_model, samples.test, cfg.threshold);
  auto [nr_model, nr_hist] = train_model(base2, cfg, samples);
  report.baseline = evaluate(nr_model, samples.test, cfg.threshold);

  report.relation_param_count = param_element_count(rel_cfg);
  report.baseline_param_count = param_element_count(base2);
  return report;
}

}  // namespace relnet
