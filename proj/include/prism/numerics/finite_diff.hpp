#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/numerics/tensor.hpp"

namespace prism {

/// Central-difference gradient of `f` with respect to every coordinate of
/// every parameter: (f(p + h e_k) - f(p - h e_k)) / 2h. Parameters are
/// restored exactly after each probe. Independent of the tape.
template <typename T, typename F>
std::vector<Matrix<T>> finite_diff_gradient(F&& f, const ParamList<T>& params, T h) {
  PRISM_REQUIRE(h > T(0), "finite_diff_gradient: step must be positive");
  std::vector<Matrix<T>> out;
  out.reserve(params.size());
  for (auto* p : params) {
    Matrix<T> g(p->value().rows(), p->value().cols());
    T* data = p->value().data();
    for (Eigen::Index k = 0; k < p->size(); ++k) {
      const T saved = data[k];
      data[k] = saved + h;
      const T fp = f();
      data[k] = saved - h;
      const T fm = f();
      data[k] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericFailure("finite_diff_gradient: objective not finite at " + p->name() + "[" +
                             std::to_string(k) + "]");
      g.data()[k] = (fp - fm) / (T(2) * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Scalar overload for one-dimensional checks.
template <typename F>
double finite_diff_derivative(F&& f, double x, double h) {
  PRISM_REQUIRE(h > 0.0, "finite_diff_derivative: step must be positive");
  const double fp = f(x + h);
  const double fm = f(x - h);
  if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericFailure("finite_diff_derivative: objective not finite");
  return (fp - fm) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is at round-off level from reporting huge relative errors.
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Re-estimates coordinates that disagree with the analytic gradient, for
/// stencils that straddle a kink (ReLU, max-pool switch). The central step is
/// halved until two successive estimates agree within `tol`, down to
/// `min_step`; the later one replaces the original. The analytic value only
/// selects which coordinates to look at, never the estimate. Returns the
/// number of coordinates replaced.
template <typename T, typename F>
std::size_t refine_at_kinks(F&& f, const ParamList<T>& params, std::vector<Matrix<T>>& numeric, T h, double floor,
                            double tol, T min_step = T(1e-8)) {
  PRISM_REQUIRE(params.size() == numeric.size(), "refine_at_kinks: list length mismatch");
  std::size_t replaced = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* data = params[i]->value().data();
    for (Eigen::Index k = 0; k < params[i]->size(); ++k) {
      if (relative_error(params[i]->grad().data()[k], numeric[i].data()[k], floor) < tol) continue;
      const T saved = data[k];
      T previous = numeric[i].data()[k];
      for (T step = h / T(2); step >= min_step; step /= T(2)) {
        data[k] = saved + step;
        const T fp = f();
        data[k] = saved - step;
        const T fm = f();
        data[k] = saved;
        const T estimate = (fp - fm) / (T(2) * step);
        if (relative_error(estimate, previous, floor) < tol) {
          numeric[i].data()[k] = estimate;
          ++replaced;
          break;
        }
        previous = estimate;
      }
    }
  }
  return replaced;
}

/// Compare analytic gradients (already in p->grad()) against numeric ones.
template <typename T>
GradCheckResult compare_gradients(const ParamList<T>& params, const std::vector<Matrix<T>>& numeric,
                                  double floor) {
  PRISM_REQUIRE(params.size() == numeric.size(), "compare_gradients: list length mismatch");
  GradCheckResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = params[i]->grad();
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      const double e = relative_error(a.data()[k], numeric[i].data()[k], floor);
      ++r.coordinates;
      if (e > r.max_relative_error || r.worst_index < 0) {
        r.max_relative_error = e;
        r.worst_parameter = params[i]->name();
        r.worst_index = k;
        r.worst_analytic = a.data()[k];
        r.worst_numeric = numeric[i].data()[k];
      }
    }
  }
  return r;
}

}  // namespace prism
