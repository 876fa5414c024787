#pragma once

#include <string>
#include <vector>

#include "relnet/data.hpp"
#include "relnet/model.hpp"
#include "relnet/tensor.hpp"

namespace relnet {

struct MetricsReport {
  double accuracy = 0, auc = 0, f1 = 0, precision = 0, recall = 0;
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  int64_t n = 0;
  // degenerate-denominator conventions: metric reported as 0, flag set
  bool no_predicted_positive = false;
  bool no_actual_positive = false;
  bool no_actual_negative = false;

  std::string to_json() const;
  // Table column order: Acc, AUC, F1, P, R
  static std::string csv_header();
  std::string csv_row(const std::string& label) const;
};

// Mean of max(l,0) - l*y + log(1+exp(-|l|)) over the batch; the stable form
// of -[y log sig(l) + (1-y) log(1-sig(l))].
double bce_loss(const Tensor& logits, const Tensor& labels);

// Rank-based (Mann-Whitney) AUC with ties counted 0.5. Throws on single-class
// input.
double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels);

MetricsReport metrics_from_scores(const std::vector<double>& scores,
                                  const std::vector<int>& labels, double threshold);

// Runs the model (variant-dispatched) over the samples and thresholds.
MetricsReport evaluate(const IntentModel& model,
                       const std::vector<ObservationSample>& samples,
                       double threshold);

}  // namespace relnet
