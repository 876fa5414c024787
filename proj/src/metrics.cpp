#include "relnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relnet/tape.hpp"

namespace relnet {

using nlohmann::json;

std::string MetricsReport::to_json() const {
  json j{{"accuracy", accuracy}, {"auc", auc},
         {"f1", f1},             {"precision", precision},
         {"recall", recall},     {"tp", tp},
         {"fp", fp},             {"tn", tn},
         {"fn", fn},             {"n", n},
         {"no_predicted_positive", no_predicted_positive},
         {"no_actual_positive", no_actual_positive},
         {"no_actual_negative", no_actual_negative}};
  return j.dump(2);
}

std::string MetricsReport::csv_header() { return "label,acc,auc,f1,precision,recall"; }

std::string MetricsReport::csv_row(const std::string& label) const {
  std::ostringstream os;
  os << label << "," << accuracy << "," << auc << "," << f1 << "," << precision
     << "," << recall;
  return os.str();
}

double bce_loss(const Tensor& logits, const Tensor& labels) {
  if (logits.size() != labels.size() || logits.size() < 1)
    throw ValidationError("bce_loss: logits " + logits.shape_str() + " vs labels " +
                          labels.shape_str());
  Tape t;
  NodeId l = t.leaf(logits.reshaped({logits.size()}));
  NodeId per = t.bce_with_logits(l, labels.reshaped({labels.size()}));
  NodeId mean = t.affine(t.sum_all(per), 1.0 / static_cast<double>(logits.size()), 0.0);
  return t.value(mean).at(0);
}

double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ValidationError("compute_auc: scores/labels size mismatch");
  int64_t pos = 0, neg = 0;
  for (int y : labels) {
    if (y != 0 && y != 1)
      throw ValidationError("compute_auc: labels must be 0/1, got " +
                            std::to_string(y));
    (y == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0)
    throw ValidationError("compute_auc: degenerate single-class input (" +
                          std::to_string(pos) + " positives, " + std::to_string(neg) +
                          " negatives)");

  // midranks handle ties exactly like the 0.5-credit pair count
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k2 = i; k2 < j; ++k2)
      if (labels[order[k2]] == 1) pos_rank_sum += mid;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

MetricsReport metrics_from_scores(const std::vector<double>& scores,
                                  const std::vector<int>& labels, double threshold) {
  if (scores.empty() || scores.size() != labels.size())
    throw ValidationError("metrics: empty or mismatched scores/labels");
  MetricsReport r;
  r.n = static_cast<int64_t>(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (pred && actual) r.tp++;
    else if (pred && !actual) r.fp++;
    else if (!pred && actual) r.fn++;
    else r.tn++;
  }
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n);
  r.no_predicted_positive = (r.tp + r.fp) == 0;
  r.no_actual_positive = (r.tp + r.fn) == 0;
  r.no_actual_negative = (r.fp + r.tn) == 0;
  r.precision = r.no_predicted_positive
                    ? 0.0
                    : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  r.recall = r.no_actual_positive
                 ? 0.0
                 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  r.auc = (r.no_actual_positive || r.no_actual_negative)
              ? 0.0
              : compute_auc(scores, labels);
  return r;
}

MetricsReport evaluate(const IntentModel& model,
                       const std::vector<ObservationSample>& samples,
                       double threshold) {
  if (samples.empty()) throw ValidationError("evaluate: empty sample list");
  const DType dt = model.params.begin()->second.dtype();
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(samples.size());
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    scores.push_back(predict_probability(model, s.frames.astype(dt),
                                         s.boxes_norm.astype(dt)));
    labels.push_back(s.label);
  }
  return metrics_from_scores(scores, labels, threshold);
}

}  // namespace relnet
