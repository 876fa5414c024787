#pragma once

#include <string>

#include "relnet/model.hpp"

namespace relnet {

// tau=4, 8x8 frames, c=8, traj_hidden=8, relation_dim=8; two stride-2 blocks
// give a 2x2 cell grid.
ModelConfig miniature_config(Variant v);

struct GradCheckResult {
  Variant variant;
  double max_rel_err = 0.0;
  int64_t elements = 0;    // gradient elements compared
  int fixture_attempt = -1;  // which candidate point satisfied the margin
  bool pass = false;
};

// Compares tape gradients against central finite differences on the
// miniature model, in f64, at a point where every ReLU pre-activation clears
// a safety margin (central differences are meaningless across a kink, so the
// fixture search walks deterministic candidate points until one is clear).
GradCheckResult run_gradient_check(Variant v, double eps = 1e-3, double tol = 1e-4,
                                   uint64_t base_seed = 7001);

struct GradSuiteResult {
  GradCheckResult relation;
  GradCheckResult baseline;
  bool pass = false;
};

GradSuiteResult run_gradient_suite(double eps = 1e-3, double tol = 1e-4);

}  // namespace relnet
