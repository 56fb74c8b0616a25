#pragma once

#include <cmath>
#include <random>
#include <string>

#include "prism/numerics/ops.hpp"
#include "prism/numerics/tape.hpp"
#include "prism/numerics/tensor.hpp"

namespace prism::model {

/// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_uniform_fan_in(Parameter<T>& p, Eigen::Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.value().data()[i] = static_cast<T>(dist(rng));
}

/// y = x W + b, applied row by row.
template <typename T>
struct Linear {
  Parameter<T> weight;
  Parameter<T> bias;
  Eigen::Index in, out;

  Linear(const std::string& name, Owner owner, Eigen::Index in_features, Eigen::Index out_features)
      : weight(name + ".weight", owner, {static_cast<std::uint32_t>(in_features), static_cast<std::uint32_t>(out_features)},
               in_features, out_features),
        bias(name + ".bias", owner, {static_cast<std::uint32_t>(out_features)}, 1, out_features),
        in(in_features),
        out(out_features) {}

  void init(std::mt19937_64& rng) {
    init_uniform_fan_in(weight, in, rng);
    bias.value().setZero();
  }

  Var forward(Tape<T>& t, Var x) { return ops::linear(t, x, t.param(weight), t.param(bias)); }

  void collect(ParamList<T>& out_list) {
    out_list.push_back(&weight);
    out_list.push_back(&bias);
  }
};

/// Dense 1D convolution with "same" padding, as im2col followed by a matmul.
/// Weight storage is (kernel * in) x out; logical shape {kernel, in, out}.
template <typename T>
struct Conv1d {
  Parameter<T> weight;
  Parameter<T> bias;
  Eigen::Index in, out, kernel;

  Conv1d(const std::string& name, Owner owner, Eigen::Index in_ch, Eigen::Index out_ch, Eigen::Index k)
      : weight(name + ".weight", owner,
               {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(in_ch), static_cast<std::uint32_t>(out_ch)},
               k * in_ch, out_ch),
        bias(name + ".bias", owner, {static_cast<std::uint32_t>(out_ch)}, 1, out_ch),
        in(in_ch),
        out(out_ch),
        kernel(k) {}

  void init(std::mt19937_64& rng) {
    init_uniform_fan_in(weight, in * kernel, rng);
    bias.value().setZero();
  }

  Var forward(Tape<T>& t, Var x, Eigen::Index seg_len) {
    Var cols = ops::im2col(t, x, kernel, seg_len);
    return ops::linear(t, cols, t.param(weight), t.param(bias));
  }

  void collect(ParamList<T>& out_list) {
    out_list.push_back(&weight);
    out_list.push_back(&bias);
  }
};

enum class BnMode { train, eval };

/// Batch normalization over (batch, position) per channel, with running
/// statistics (momentum 0.1, unbiased running variance).
template <typename T>
struct BatchNorm {
  static constexpr double momentum = 0.1;
  static constexpr double eps = 1e-5;

  Parameter<T> gamma;
  Parameter<T> beta;
  Buffer<T> running_mean;
  Buffer<T> running_var;

  BatchNorm(const std::string& name, Owner owner, Eigen::Index channels)
      : gamma(name + ".gamma", owner, {static_cast<std::uint32_t>(channels)}, 1, channels),
        beta(name + ".beta", owner, {static_cast<std::uint32_t>(channels)}, 1, channels),
        running_mean{name + ".running_mean", {static_cast<std::uint32_t>(channels)}, Matrix<T>::Zero(1, channels)},
        running_var{name + ".running_var", {static_cast<std::uint32_t>(channels)}, Matrix<T>::Ones(1, channels)} {}

  void init() {
    gamma.value().setOnes();
    beta.value().setZero();
    running_mean.value.setZero();
    running_var.value.setOnes();
  }

  Var forward(Tape<T>& t, Var x, BnMode mode, bool update_running) {
    if (mode == BnMode::eval)
      return ops::batch_norm_eval(t, x, t.param(gamma), t.param(beta), running_mean.value, running_var.value,
                                  static_cast<T>(eps));
    ops::BatchStats<T> stats;
    Var y = ops::batch_norm_train(t, x, t.param(gamma), t.param(beta), static_cast<T>(eps), &stats);
    if (update_running) {
      const T m = static_cast<T>(momentum);
      const T n = static_cast<T>(stats.count);
      const T unbias = stats.count > 1 ? n / (n - T(1)) : T(1);
      running_mean.value = (T(1) - m) * running_mean.value + m * stats.mean;
      running_var.value = (T(1) - m) * running_var.value + m * unbias * stats.variance;
    }
    return y;
  }

  void collect(ParamList<T>& out_list) {
    out_list.push_back(&gamma);
    out_list.push_back(&beta);
  }

  void collect_buffers(BufferList<T>& out_list) {
    out_list.push_back(&running_mean);
    out_list.push_back(&running_var);
  }
};

}  // namespace prism::model
