#include "relnet/param_store.hpp"

#include <cmath>

namespace relnet {

void ParamStore::insert(const std::string& name, Tensor value) {
  auto [it, ok] = params_.emplace(name, std::move(value));
  if (!ok) throw ValidationError("duplicate parameter name: " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::get_mutable(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter: " + name);
  return it->second;
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

ParamStore ParamStore::astype(DType dt) const {
  ParamStore out;
  for (const auto& [name, t] : params_) out.insert(name, t.astype(dt));
  return out;
}

OptimState make_optim_state(const ParamStore& params, OptimKind kind) {
  OptimState st;
  if (kind == OptimKind::adam) {
    for (const auto& [name, t] : params) {
      st.m.emplace(name, Tensor::zeros(t.shape(), t.dtype()));
      st.v.emplace(name, Tensor::zeros(t.shape(), t.dtype()));
    }
  }
  return st;
}

void optimizer_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
                    OptimState& state, const OptimConfig& cfg) {
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end())
      throw ValidationError("optimizer_step: missing gradient for " + name);
    const Tensor& g = git->second;
    if (!g.same_shape(p))
      throw ValidationError("optimizer_step: gradient shape " + g.shape_str() +
                            " does not match parameter " + name + " " + p.shape_str());
  }
  state.step += 1;
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    if (cfg.kind == OptimKind::sgd) {
      for (int64_t i = 0; i < p.size(); ++i) p.set(i, p.at(i) - cfg.lr * g.at(i));
      continue;
    }
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (int64_t i = 0; i < p.size(); ++i) {
      const double gi = g.at(i);
      const double mi = cfg.beta1 * m.at(i) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v.at(i) + (1.0 - cfg.beta2) * gi * gi;
      m.set(i, mi);
      v.set(i, vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.set(i, p.at(i) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

std::map<std::string, Tensor> finite_difference_gradients(
    const std::function<double(const ParamStore&)>& f, const ParamStore& params,
    double eps) {
  if (eps <= 0) throw ValidationError("finite differences require eps > 0");
  ParamStore work = params;
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : params) {
    Tensor g = Tensor::zeros(t.shape(), t.dtype());
    Tensor& w = work.get_mutable(name);
    for (int64_t i = 0; i < t.size(); ++i) {
      const double orig = w.at(i);
      w.set(i, orig + eps);
      const double fp = f(work);
      w.set(i, orig - eps);
      const double fm = f(work);
      w.set(i, orig);
      g.set(i, (fp - fm) / (2.0 * eps));
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

double max_relative_error(const std::map<std::string, Tensor>& a,
                          const std::map<std::string, Tensor>& b, double floor) {
  double worst = 0.0;
  for (const auto& [name, ta] : a) {
    const Tensor& tb = b.at(name);
    for (int64_t i = 0; i < ta.size(); ++i) {
      const double x = ta.at(i), y = tb.at(i);
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

}  // namespace relnet
