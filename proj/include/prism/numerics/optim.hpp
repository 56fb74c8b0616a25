#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/numerics/tensor.hpp"

namespace prism {

/// Linear warmup from `warmup_start` to `peak`, then cosine decay to `floor`.
struct LrSchedule {
  double warmup_start = 1e-5;
  double peak = 5e-4;
  double floor = 1e-4;
  std::int64_t warmup_steps = 5000;
  std::int64_t total_steps = 50000;

  void validate() const {
    PRISM_REQUIRE(warmup_start <= peak, "lr schedule: warmup_start must not exceed peak");
    PRISM_REQUIRE(floor <= peak, "lr schedule: floor must not exceed peak");
    PRISM_REQUIRE(0 < warmup_steps && warmup_steps < total_steps,
                  "lr schedule: need 0 < warmup_steps < total_steps");
  }
};

inline double lr_at(const LrSchedule& s, std::int64_t step) {
  s.validate();
  PRISM_REQUIRE(step >= 0 && step <= s.total_steps,
                "lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) + "]");
  if (step <= s.warmup_steps) {
    const double frac = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    return s.warmup_start + (s.peak - s.warmup_start) * frac;
  }
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return s.floor + (s.peak - s.floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Adam without weight decay. Moment buffers follow the order of the parameter
/// list passed on the first step; later calls must pass the same list.
template <typename T>
class Adam {
 public:
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;

  void step(const ParamList<T>& params, double learning_rate) {
    if (m_.empty()) init(params);
    PRISM_REQUIRE(params.size() == m_.size(), "adam: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& g = params[i]->grad();
      PRISM_REQUIRE(g.rows() == params[i]->value().rows() && g.cols() == params[i]->value().cols(),
                    "adam: missing gradient for " + params[i]->name());
    }
    ++t_;
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(beta1, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(learning_rate);
    const T eps = static_cast<T>(epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto g = params[i]->grad().array();
      auto m = m_[i].array();
      auto v = v_[i].array();
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.square();
      params[i]->value().array() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
    }
  }

  std::int64_t steps_taken() const { return t_; }
  const std::vector<Matrix<T>>& first_moments() const { return m_; }
  const std::vector<Matrix<T>>& second_moments() const { return v_; }

  /// Restore state saved by a previous run (see checkpoint.hpp).
  void restore(std::int64_t steps, std::vector<Matrix<T>> m, std::vector<Matrix<T>> v) {
    PRISM_REQUIRE(m.size() == v.size(), "adam: moment lists differ in length");
    t_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  void init(const ParamList<T>& params) {
    for (auto* p : params) {
      m_.push_back(Matrix<T>::Zero(p->value().rows(), p->value().cols()));
      v_.push_back(Matrix<T>::Zero(p->value().rows(), p->value().cols()));
    }
  }

  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  std::int64_t t_ = 0;
};

}  // namespace prism
