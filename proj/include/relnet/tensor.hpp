#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relnet/errors.hpp"

namespace relnet {

enum class DType { f32, f64 };

inline const char* dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }

// When enabled, every tape operation asserts that its output is finite.
// Tests and verification runs switch this on; training leaves it off.
void set_finite_checks(bool on);
bool finite_checks_enabled();

// Dense n-d array, flat row-major storage, single or double precision.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, DType dt = DType::f32);
  static Tensor full(std::vector<int64_t> shape, double value, DType dt = DType::f32);
  static Tensor from(std::vector<int64_t> shape, const std::vector<double>& values,
                     DType dt = DType::f32);
  static Tensor scalar(double value, DType dt = DType::f32);

  bool defined() const { return !shape_.empty() || size_ > 0; }
  int64_t size() const { return size_; }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  DType dtype() const { return dtype_; }

  template <typename T>
  T* data();
  template <typename T>
  const T* data() const;

  // Converting flat accessors; handy in tests and glue code, not in kernels.
  double at(int64_t i) const;
  void set(int64_t i, double v);

  Tensor astype(DType dt) const;
  Tensor reshaped(std::vector<int64_t> shape) const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool bit_equal(const Tensor& other) const;

  std::string shape_str() const;

 private:
  std::vector<int64_t> shape_;
  int64_t size_ = 0;
  DType dtype_ = DType::f32;
  std::vector<float> f_;
  std::vector<double> d_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);
int64_t shape_product(const std::vector<int64_t>& shape);

}  // namespace relnet
