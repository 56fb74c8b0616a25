#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/model/prism_model.hpp"
#include "prism/numerics/ops.hpp"

namespace prism::intervention {

struct LossConfig {
  double alpha = 1.0;  // weight of the intervention loss
  double beta = 1.0;   // weight of the uniformity loss
  double t = 2.0;      // uniformity temperature
  double delta = 1.0;  // Huber threshold

  void validate() const {
    PRISM_REQUIRE(alpha >= 0.0, "loss: alpha must be non-negative");
    PRISM_REQUIRE(beta >= 0.0, "loss: beta must be non-negative");
    PRISM_REQUIRE(t > 0.0, "loss: temperature must be positive");
    PRISM_REQUIRE(delta > 0.0, "loss: Huber delta must be positive");
  }
};

/// Loss values of one batch. `total` is accumulated as (l1 + alpha*l2) + beta*l3,
/// the same order the tape uses, so the identity holds bit for bit.
template <typename T>
struct LossBreakdown {
  T l1 = 0;
  T l2 = 0;
  T l3 = 0;
  T total = 0;
  double alpha = 0, beta = 0, t = 0, delta = 0;
};

inline double huber(double pred, double target, double delta) {
  PRISM_REQUIRE(delta > 0.0, "huber: delta must be positive");
  const double a = std::abs(pred - target);
  return a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta);
}

inline double huber_mean(std::span<const double> pred, std::span<const double> target, double delta) {
  PRISM_REQUIRE(pred.size() == target.size() && !pred.empty(), "huber_mean: need equal non-empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += huber(pred[i], target[i], delta);
  return s / static_cast<double>(pred.size());
}

/// Uniformity loss of each example's weight vectors, averaged over the batch.
///
/// `A` is batch x (n * hidden); row b holds a_1..a_n for example b. Per example:
///   log( sum_{i,j} exp(2t <a_i/|a_i|, a_j/|a_j|> - 2t) )
/// over all ordered pairs including i == j. The diagonal terms are exactly
/// exp(0) = 1 and are added as the constant n.
template <typename T>
Var uniform_loss(Tape<T>& tape, Var A, Eigen::Index n, Eigen::Index hidden, double t) {
  PRISM_REQUIRE(t > 0.0, "uniform_loss: temperature must be positive");
  PRISM_REQUIRE(n >= 1, "uniform_loss: need at least one weight vector");
  PRISM_REQUIRE(tape.value(A).cols() == n * hidden, "uniform_loss: weights must be batch x (n * hidden)");
  std::vector<Var> unit;
  for (Eigen::Index i = 0; i < n; ++i)
    unit.push_back(ops::row_l2_normalize(tape, ops::slice_cols(tape, A, i * hidden, hidden)));
  const T two_t = static_cast<T>(2.0 * t);
  Var acc = tape.constant(Matrix<T>::Constant(tape.value(A).rows(), 1, static_cast<T>(n)));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      Var cos = ops::row_sum(tape, ops::mul(tape, unit[i], unit[j]));
      Var term = ops::exp(tape, ops::add_scalar(tape, ops::scale(tape, cos, two_t), -two_t));
      // (i, j) and (j, i) contribute the same term.
      acc = ops::add(tape, acc, ops::scale(tape, term, T(2)));
    }
  return ops::mean(tape, ops::log(tape, acc));
}

/// Uniformity loss of a single n x d' weight matrix (one gene).
template <typename T>
T uniform_loss_value(const Matrix<T>& weights, double t) {
  const Eigen::Index n = weights.rows();
  const Eigen::Index hidden = weights.cols();
  Matrix<T> flat(1, n * hidden);
  for (Eigen::Index i = 0; i < n; ++i) flat.block(0, i * hidden, 1, hidden) = weights.row(i);
  Tape<T> tape(false);
  return tape.value(uniform_loss(tape, tape.constant(flat), n, hidden, t))(0, 0);
}

/// Mean Huber loss of the backdoor-adjusted prediction.
template <typename T>
Var intervention_loss(Tape<T>& tape, model::PrismModel<T>& m, const model::Batch<T>& b, Var A, double delta) {
  return ops::huber_mean(tape, m.predict_interventional(tape, b, A), b.y, static_cast<T>(delta));
}

/// Combined objective on one batch. Returns the tape value of the total and
/// fills `out` with every term.
template <typename T>
Var total_loss(Tape<T>& tape, model::PrismModel<T>& m, const model::Batch<T>& b, const LossConfig& cfg,
               model::BnMode mode, bool update_running, LossBreakdown<T>& out) {
  cfg.validate();
  auto fwd = m.forward_train(tape, b, mode, update_running);
  const T delta = static_cast<T>(cfg.delta);
  Var l1 = ops::huber_mean(tape, fwd.prediction, b.y, delta);
  out = LossBreakdown<T>{};
  out.alpha = cfg.alpha;
  out.beta = cfg.beta;
  out.t = cfg.t;
  out.delta = cfg.delta;
  out.l1 = tape.value(l1)(0, 0);
  if (!fwd.has_intervention) {
    out.total = out.l1;
    return l1;
  }
  Var l2 = ops::huber_mean(tape, fwd.interventional, b.y, delta);
  Var l3 = uniform_loss(tape, fwd.weights, m.config().states, m.config().hidden, cfg.t);
  const T alpha = static_cast<T>(cfg.alpha);
  const T beta = static_cast<T>(cfg.beta);
  Var total = ops::add(tape, ops::add(tape, l1, ops::scale(tape, l2, alpha)), ops::scale(tape, l3, beta));
  out.l2 = tape.value(l2)(0, 0);
  out.l3 = tape.value(l3)(0, 0);
  out.total = (out.l1 + out.l2 * alpha) + out.l3 * beta;
  return total;
}

}  // namespace prism::intervention
