#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "prism/errors.hpp"

namespace prism {

namespace detail {
// Activations are large and short-lived. Keep them on the heap instead of
// fresh mmap pages so each op does not pay for page faults.
inline const bool kAllocatorTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();
}  // namespace detail

/// Dense row-major storage. Every tensor in the project is at most rank 2 in
/// memory; batched sequences are stacked as (batch * length) rows.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<std::uint32_t>;

/// Which network owns a parameter: signal encoder, confounder encoder, or predictor.
enum class Owner { theta, omega, phi };

inline std::string_view owner_name(Owner o) {
  switch (o) {
    case Owner::theta: return "theta";
    case Owner::omega: return "omega";
    case Owner::phi: return "phi";
  }
  return "?";
}

inline std::uint64_t shape_size(const Shape& s) {
  std::uint64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

/// A trainable tensor with its gradient. `shape` is the logical shape written
/// to checkpoints; storage is `rows x cols` with rows * cols == product(shape).
template <typename T>
class Parameter {
 public:
  Parameter(std::string name, Owner owner, Shape shape, Eigen::Index rows, Eigen::Index cols)
      : name_(std::move(name)), owner_(owner), shape_(std::move(shape)),
        value_(Matrix<T>::Zero(rows, cols)), grad_(Matrix<T>::Zero(rows, cols)) {
    PRISM_REQUIRE(static_cast<std::uint64_t>(rows * cols) == shape_size(shape_),
                  "parameter " + name_ + ": storage does not match shape");
  }

  const std::string& name() const { return name_; }
  Owner owner() const { return owner_; }
  const Shape& shape() const { return shape_; }

  Matrix<T>& value() { return value_; }
  const Matrix<T>& value() const { return value_; }
  Matrix<T>& grad() { return grad_; }
  const Matrix<T>& grad() const { return grad_; }

  Eigen::Index size() const { return value_.size(); }
  void zero_grad() { grad_.setZero(); }

 private:
  std::string name_;
  Owner owner_;
  Shape shape_;
  Matrix<T> value_;
  Matrix<T> grad_;
};

/// True when no entry is NaN or infinite. x * 0 is 0 for finite x and NaN
/// otherwise, and the vectorized sum keeps that NaN.
template <typename T>
bool all_finite(const Matrix<T>& m) {
  return m.size() == 0 || (m.array() * T(0)).sum() == T(0);
}

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

/// Non-trainable state saved alongside parameters (batch-norm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Shape shape;
  Matrix<T> value;
};

template <typename T>
using BufferList = std::vector<Buffer<T>*>;

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
std::uint64_t count_parameters(const ParamList<T>& params) {
  std::uint64_t n = 0;
  for (auto* p : params) n += static_cast<std::uint64_t>(p->size());
  return n;
}

}  // namespace prism
