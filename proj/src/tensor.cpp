#include "relnet/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace relnet {

namespace {
std::atomic<bool> g_finite_checks{false};
}

void set_finite_checks(bool on) { g_finite_checks.store(on); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

int64_t shape_product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

static void check_shape(const std::vector<int64_t>& shape) {
  for (int64_t d : shape) {
    if (d <= 0)
      throw ValidationError("tensor shape must have positive dims, got " +
                            shape_to_string(shape));
  }
}

Tensor Tensor::zeros(std::vector<int64_t> shape, DType dt) {
  check_shape(shape);
  Tensor t;
  t.shape_ = std::move(shape);
  t.size_ = shape_product(t.shape_);
  t.dtype_ = dt;
  if (dt == DType::f32)
    t.f_.assign(static_cast<size_t>(t.size_), 0.0f);
  else
    t.d_.assign(static_cast<size_t>(t.size_), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, DType dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (dt == DType::f32)
    t.f_.assign(t.f_.size(), static_cast<float>(value));
  else
    t.d_.assign(t.d_.size(), value);
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, const std::vector<double>& values,
                    DType dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (static_cast<int64_t>(values.size()) != t.size_)
    throw ValidationError("tensor init: " + std::to_string(values.size()) +
                          " values for shape " + t.shape_str());
  for (int64_t i = 0; i < t.size_; ++i) t.set(i, values[static_cast<size_t>(i)]);
  return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({1}, value, dt); }

template <>
float* Tensor::data<float>() {
  if (dtype_ != DType::f32) throw ValidationError("tensor is not f32");
  return f_.data();
}
template <>
double* Tensor::data<double>() {
  if (dtype_ != DType::f64) throw ValidationError("tensor is not f64");
  return d_.data();
}
template <>
const float* Tensor::data<float>() const {
  if (dtype_ != DType::f32) throw ValidationError("tensor is not f32");
  return f_.data();
}
template <>
const double* Tensor::data<double>() const {
  if (dtype_ != DType::f64) throw ValidationError("tensor is not f64");
  return d_.data();
}

double Tensor::at(int64_t i) const {
  return dtype_ == DType::f32 ? static_cast<double>(f_[static_cast<size_t>(i)])
                              : d_[static_cast<size_t>(i)];
}

void Tensor::set(int64_t i, double v) {
  if (dtype_ == DType::f32)
    f_[static_cast<size_t>(i)] = static_cast<float>(v);
  else
    d_[static_cast<size_t>(i)] = v;
}

Tensor Tensor::astype(DType dt) const {
  if (dt == dtype_) return *this;
  Tensor t = zeros(shape_, dt);
  for (int64_t i = 0; i < size_; ++i) t.set(i, at(i));
  return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  if (shape_product(shape) != size_)
    throw ValidationError("reshape " + shape_str() + " -> " + shape_to_string(shape) +
                          " changes element count");
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

bool Tensor::all_finite() const {
  if (dtype_ == DType::f32) {
    for (float v : f_)
      if (!std::isfinite(v)) return false;
  } else {
    for (double v : d_)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
  if (dtype_ == DType::f32)
    return std::memcmp(f_.data(), other.f_.data(), f_.size() * sizeof(float)) == 0;
  return std::memcmp(d_.data(), other.d_.data(), d_.size() * sizeof(double)) == 0;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

}  // namespace relnet
