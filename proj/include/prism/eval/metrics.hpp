#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prism/errors.hpp"

namespace prism::eval {

/// MSE, MAE and Pearson r. Pearson is absent when either input is constant.
struct MetricTriple {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> pearson;

  double r() const {
    if (!pearson) throw ContractViolation("pearson: undefined for constant predictions or targets");
    return *pearson;
  }
};

/// Pearson uses population covariance over the product of population standard
/// deviations. Computed in two passes around the means.
inline MetricTriple metrics(std::span<const double> pred, std::span<const double> target) {
  PRISM_REQUIRE(!pred.empty(), "metrics: empty input");
  PRISM_REQUIRE(pred.size() == target.size(), "metrics: predictions and targets differ in length (" +
                                                  std::to_string(pred.size()) + " vs " +
                                                  std::to_string(target.size()) + ")");
  const double n = static_cast<double>(pred.size());
  double se = 0.0, ae = 0.0, mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    se += e * e;
    ae += std::abs(e);
    mp += pred[i];
    mt += target[i];
  }
  mp /= n;
  mt /= n;
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = pred[i] - mp;
    const double b = target[i] - mt;
    cov += a * b;
    vp += a * a;
    vt += b * b;
  }
  MetricTriple m;
  m.mse = se / n;
  m.mae = ae / n;
  if (vp > 0.0 && vt > 0.0) m.pearson = std::clamp((cov / n) / (std::sqrt(vp / n) * std::sqrt(vt / n)), -1.0, 1.0);
  return m;
}

/// Sample mean and standard deviation (n - 1 denominator).
struct SeedStats {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

inline SeedStats seed_stats(std::span<const double> values) {
  PRISM_REQUIRE(values.size() >= 2, "seed statistics need at least two seeds");
  SeedStats s;
  s.count = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return s;
}

}  // namespace prism::eval
