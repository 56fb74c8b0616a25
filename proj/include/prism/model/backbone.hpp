#pragma once

#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/model/layers.hpp"

namespace prism::model {

/// Predictor body: maps a fused (batch * L) x hidden sequence to a pooled
/// batch x hidden representation. Implementations must be deterministic and
/// must not couple examples within a batch.
template <typename T>
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::string name() const = 0;
  virtual Var forward(Tape<T>& t, Var fused, Eigen::Index seg_len) = 0;
  virtual void init(std::mt19937_64& rng) = 0;
  virtual void collect(ParamList<T>& out) = 0;
};

/// Reference body: residual gated convolution blocks, then mean-pool.
///
/// Each block computes u = dwconv_k(x) + c (per-channel kernel, same padding),
/// then x + (u Wv + bv) * sigmoid(u Wg + bg). Both branches are therefore
/// kernel-k separable convolutions sharing the depthwise stage.
template <typename T>
class GatedConvBackbone final : public Backbone<T> {
 public:
  static constexpr const char* kName = "gated-conv";

  GatedConvBackbone(Eigen::Index hidden, int layers, Eigen::Index kernel) : hidden_(hidden), kernel_(kernel) {
    PRISM_REQUIRE(layers >= 1, "gated-conv backbone needs at least one layer");
    PRISM_REQUIRE(kernel % 2 == 1, "gated-conv backbone kernel must be odd for same padding");
    for (int i = 0; i < layers; ++i) blocks_.push_back(std::make_unique<Block>(i, hidden, kernel));
  }

  std::string name() const override { return kName; }

  Var forward(Tape<T>& t, Var x, Eigen::Index seg_len) override {
    for (auto& b : blocks_) {
      Var u = ops::add_bias(t, ops::depthwise_conv(t, x, t.param(b->dw_weight), seg_len), t.param(b->dw_bias));
      Var value = b->value.forward(t, u);
      Var gate = ops::sigmoid(t, b->gate.forward(t, u));
      x = ops::add(t, x, ops::mul(t, value, gate));
    }
    return ops::mean_pool(t, x, seg_len);
  }

  void init(std::mt19937_64& rng) override {
    for (auto& b : blocks_) {
      init_uniform_fan_in(b->dw_weight, kernel_, rng);
      b->dw_bias.value().setZero();
      b->value.init(rng);
      b->gate.init(rng);
    }
  }

  void collect(ParamList<T>& out) override {
    for (auto& b : blocks_) {
      out.push_back(&b->dw_weight);
      out.push_back(&b->dw_bias);
      b->value.collect(out);
      b->gate.collect(out);
    }
  }

 private:
  struct Block {
    Parameter<T> dw_weight;
    Parameter<T> dw_bias;
    Linear<T> value;
    Linear<T> gate;

    Block(int i, Eigen::Index hidden, Eigen::Index kernel)
        : dw_weight("phi.body." + std::to_string(i) + ".dw.weight", Owner::phi,
                    {static_cast<std::uint32_t>(kernel), static_cast<std::uint32_t>(hidden)}, kernel, hidden),
          dw_bias("phi.body." + std::to_string(i) + ".dw.bias", Owner::phi, {static_cast<std::uint32_t>(hidden)}, 1,
                  hidden),
          value("phi.body." + std::to_string(i) + ".value", Owner::phi, hidden, hidden),
          gate("phi.body." + std::to_string(i) + ".gate", Owner::phi, hidden, hidden) {}
  };

  Eigen::Index hidden_;
  Eigen::Index kernel_;
  std::vector<std::unique_ptr<Block>> blocks_;
};

/// Named backbone factory so the body can be swapped from configuration.
template <typename T>
std::unique_ptr<Backbone<T>> make_backbone(const std::string& name, Eigen::Index hidden, int layers, Eigen::Index kernel) {
  if (name == GatedConvBackbone<T>::kName) return std::make_unique<GatedConvBackbone<T>>(hidden, layers, kernel);
  throw ContractViolation("unknown backbone '" + name + "' (available: gated-conv)");
}

}  // namespace prism::model
