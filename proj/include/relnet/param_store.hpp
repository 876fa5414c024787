#pragma once

#include <functional>
#include <map>
#include <string>

#include "relnet/tensor.hpp"

namespace relnet {

// Named parameter set. std::map keeps iteration order sorted by name, which
// every consumer (init, optimizer, serialization) relies on for determinism.
class ParamStore {
 public:
  void insert(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get_mutable(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  size_t size() const { return params_.size(); }
  int64_t total_elements() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  ParamStore astype(DType dt) const;

 private:
  std::map<std::string, Tensor> params_;
};

enum class OptimKind { sgd, adam };

struct OptimConfig {
  OptimKind kind = OptimKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam moment buffers; empty (and unused) under plain SGD.
struct OptimState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  int64_t step = 0;
};

OptimState make_optim_state(const ParamStore& params, OptimKind kind);

// In-place update. Every parameter must have a gradient of matching shape.
void optimizer_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
                    OptimState& state, const OptimConfig& cfg);

// Central differences (f(p+eps e) - f(p-eps e)) / (2 eps), element by element.
// The closure must be deterministic; run in f64 for meaningful comparisons.
std::map<std::string, Tensor> finite_difference_gradients(
    const std::function<double(const ParamStore&)>& f, const ParamStore& params,
    double eps);

// max over elements of |a - b| / max(|a|, |b|, floor)
double max_relative_error(const std::map<std::string, Tensor>& a,
                          const std::map<std::string, Tensor>& b,
                          double floor = 1e-8);

}  // namespace relnet
