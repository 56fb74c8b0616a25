#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "prism/errors.hpp"
#include "prism/numerics/tensor.hpp"

namespace prism {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = 0;
};

/// Records one forward pass and replays it in reverse to compute gradients.
///
/// Values are immutable once pushed. A tape built with `record = false` keeps
/// values only (no backward closures); use it for evaluation and for the
/// finite-difference oracle. A tape is meant to live for a single forward and
/// backward; it is discarded afterwards.
template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;
  using BackwardFn = std::function<void(Tape&, const Mat& grad_out)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Mat value) { return push(std::move(value), "constant", false, nullptr); }

  /// Leaf bound to a trainable parameter; backward() accumulates into p.grad().
  Var param(Parameter<T>& p) {
    Var v = push(p.value(), "param", record_, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const char* op_name(Var v) const { return nodes_[v.id].op; }

  /// Gradient of the last backward() with respect to an intermediate value.
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  /// Append an op result. `fn` is dropped unless recording and some input needs a gradient.
  Var push(Mat value, const char* op, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    if (record_)
      for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), op, needs, needs ? std::move(fn) : nullptr);
  }

  Var push(Mat value, const char* op, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    if (record_)
      for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), op, needs, needs ? std::move(fn) : nullptr);
  }

  /// Add `g` into the gradient slot of `v` (no-op for constants).
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Populate gradients of every parameter reachable from `loss`.
  ///
  /// Gradients are added to Parameter::grad(); reset them first (zero_grads)
  /// to get d loss / d param. Calling backward twice on the same tape after a
  /// reset reproduces the same gradients bit for bit.
  void backward(Var loss) {
    PRISM_REQUIRE(record_, "backward on a tape that was not recording");
    const Mat& lv = nodes_[loss.id].value;
    PRISM_REQUIRE(lv.rows() == 1 && lv.cols() == 1,
                  "backward needs a scalar loss, got " + std::to_string(lv.rows()) + "x" +
                      std::to_string(lv.cols()));
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad = Mat::Ones(1, 1);

    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (!all_finite(n.grad))
        throw NumericFailure(std::string("non-finite gradient flowing into op '") + n.op + "'");
      if (n.backward) {
        // The closure may touch nodes_ through the tape; copy nothing, just
        // hold a reference to the stable gradient of this node.
        const Mat& g = n.grad;
        n.backward(*this, g);
      }
      if (n.param != nullptr) n.param->grad() += n.grad;
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    const char* op = "";
    bool requires_grad = false;
  };

  Var push(Mat value, const char* op, bool requires_grad, BackwardFn fn) {
    if (!all_finite(value))
      throw NumericFailure(std::string("non-finite value produced by op '") + op + "'");
    Node n;
    n.value = std::move(value);
    n.backward = std::move(fn);
    n.op = op;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  bool record_;
};

}  // namespace prism
