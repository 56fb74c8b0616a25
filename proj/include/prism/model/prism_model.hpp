#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/model/backbone.hpp"
#include "prism/model/batch.hpp"
#include "prism/model/layers.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::model {

struct ModelConfig {
  Eigen::Index tracks = 3;    // d, raw signal tracks
  Eigen::Index hidden = 128;  // d', encoded feature width and backbone width
  Eigen::Index states = 2;    // n, background chromatin strata; 0 disables the confounder encoder
  Eigen::Index aux = 0;       // k, auxiliary features fed to the head
  std::string backbone = "gated-conv";
  int backbone_layers = 4;
  Eigen::Index backbone_kernel = 5;

  void validate() const {
    PRISM_REQUIRE(tracks >= 1, "model: need at least one signal track");
    PRISM_REQUIRE(hidden >= 1, "model: hidden width must be positive");
    PRISM_REQUIRE(states >= 0, "model: number of states must be non-negative");
    PRISM_REQUIRE(aux >= 0, "model: aux width must be non-negative");
  }
};

/// Signal encoder g_theta: one linear map applied at every position, d -> d'.
template <typename T>
struct SignalEncoder {
  Linear<T> proj;

  SignalEncoder(Eigen::Index d, Eigen::Index hidden) : proj("theta.signal", Owner::theta, d, hidden) {}

  Var forward(Tape<T>& t, Var S) {
    PRISM_REQUIRE(t.value(S).cols() == proj.in, "encode_signals: expected " + std::to_string(proj.in) +
                                                     " tracks, got " + std::to_string(t.value(S).cols()));
    return proj.forward(t, S);
  }
};

/// Confounder encoder g_omega: three conv/batch-norm/ReLU/max-pool(4) stages
/// (8, 16, 32 channels; kernels 7, 5, 3), global average pool, a linear map
/// to n * d', and a sigmoid. Output row b holds a_1..a_n for example b.
template <typename T>
struct ConfounderEncoder {
  static constexpr Eigen::Index kPool = 4;
  static constexpr Eigen::Index kMinLength = kPool * kPool * kPool;

  Conv1d<T> conv1, conv2, conv3;
  BatchNorm<T> bn1, bn2, bn3;
  Linear<T> proj;
  Eigen::Index states, hidden;

  ConfounderEncoder(Eigen::Index d, Eigen::Index n, Eigen::Index hidden_width)
      : conv1("omega.conv1", Owner::omega, d, 8, 7),
        conv2("omega.conv2", Owner::omega, 8, 16, 5),
        conv3("omega.conv3", Owner::omega, 16, 32, 3),
        bn1("omega.bn1", Owner::omega, 8),
        bn2("omega.bn2", Owner::omega, 16),
        bn3("omega.bn3", Owner::omega, 32),
        proj("omega.proj", Owner::omega, 32, n * hidden_width),
        states(n),
        hidden(hidden_width) {}

  void init(std::mt19937_64& rng) {
    conv1.init(rng);
    bn1.init();
    conv2.init(rng);
    bn2.init();
    conv3.init(rng);
    bn3.init();
    proj.init(rng);
  }

  Var forward(Tape<T>& t, Var S, Eigen::Index seg_len, BnMode mode, bool update_running) {
    PRISM_REQUIRE(seg_len >= kMinLength, "confounder_weights: window length " + std::to_string(seg_len) +
                                             " is below the minimum of " + std::to_string(kMinLength));
    Var x = S;
    Eigen::Index len = seg_len;
    Conv1d<T>* convs[] = {&conv1, &conv2, &conv3};
    BatchNorm<T>* bns[] = {&bn1, &bn2, &bn3};
    for (int i = 0; i < 3; ++i) {
      x = convs[i]->forward(t, x, len);
      x = bns[i]->forward(t, x, mode, update_running);
      x = ops::relu(t, x);
      x = ops::max_pool(t, x, kPool, len);
      len /= kPool;
    }
    x = ops::mean_pool(t, x, len);
    return ops::sigmoid(t, proj.forward(t, x));
  }

  void collect(ParamList<T>& out) {
    conv1.collect(out);
    bn1.collect(out);
    conv2.collect(out);
    bn2.collect(out);
    conv3.collect(out);
    bn3.collect(out);
    proj.collect(out);
  }

  void collect_buffers(BufferList<T>& out) {
    bn1.collect_buffers(out);
    bn2.collect_buffers(out);
    bn3.collect_buffers(out);
  }
};

/// Outputs of one training forward pass.
struct TrainForward {
  Var prediction;                 // batch x 1, standard path
  Var interventional;             // batch x 1, backdoor-adjusted path (n > 0)
  Var weights;                    // batch x (n * d') confounder weights (n > 0)
  bool has_intervention = false;
};

/// Signal encoder, predictor (sequence projection + backbone + head) and, when
/// n > 0, the confounder encoder.
template <typename T>
class PrismModel {
 public:
  explicit PrismModel(ModelConfig cfg)
      : cfg_(std::move(cfg)),
        signal_(cfg_.tracks, cfg_.hidden),
        seq_proj_("phi.seq_proj", Owner::phi, 4, cfg_.hidden),
        body_(make_backbone<T>(cfg_.backbone, cfg_.hidden, cfg_.backbone_layers, cfg_.backbone_kernel)),
        head_("phi.head", Owner::phi, cfg_.hidden + cfg_.aux, 1) {
    cfg_.validate();
#ifndef PRISM_NO_INTERVENTION
    if (cfg_.states > 0) confounder_ = std::make_unique<ConfounderEncoder<T>>(cfg_.tracks, cfg_.states, cfg_.hidden);
#endif
  }

  const ModelConfig& config() const { return cfg_; }
  Backbone<T>& backbone() { return *body_; }

  /// Seeded init. Predictor and signal encoder draw first so their values do
  /// not depend on whether a confounder encoder exists.
  void init(std::uint64_t seed) {
    auto rng = make_rng(seed, Stream::init);
    signal_.proj.init(rng);
    seq_proj_.init(rng);
    body_->init(rng);
    head_.init(rng);
#ifndef PRISM_NO_INTERVENTION
    if (confounder_) confounder_->init(rng);
#endif
  }

  /// All trainable parameters: theta, then phi, then omega.
  ParamList<T> parameters() {
    ParamList<T> out;
    signal_.proj.collect(out);
    seq_proj_.collect(out);
    body_->collect(out);
    head_.collect(out);
#ifndef PRISM_NO_INTERVENTION
    if (confounder_) confounder_->collect(out);
#endif
    return out;
  }

  ParamList<T> parameters(Owner owner) {
    ParamList<T> out;
    for (auto* p : parameters())
      if (p->owner() == owner) out.push_back(p);
    return out;
  }

  BufferList<T> buffers() {
    BufferList<T> out;
#ifndef PRISM_NO_INTERVENTION
    if (confounder_) confounder_->collect_buffers(out);
#endif
    return out;
  }

  Var encode_signals(Tape<T>& t, Var S) { return signal_.forward(t, S); }

  Var project_sequence(Tape<T>& t, Var X) {
    PRISM_REQUIRE(t.value(X).cols() == 4, "predict: sequence must have 4 channels");
    return seq_proj_.forward(t, X);
  }

  Var body(Tape<T>& t, Var fused, Eigen::Index seg_len) { return body_->forward(t, fused, seg_len); }

  /// Affine head on [pooled representation | aux features].
  Var head(Tape<T>& t, Var rep, Var aux) {
    PRISM_REQUIRE(t.value(aux).cols() == cfg_.aux, "predict: expected " + std::to_string(cfg_.aux) +
                                                       " aux features, got " + std::to_string(t.value(aux).cols()));
    return head_.forward(t, ops::concat_cols(t, rep, aux));
  }

  /// Standard prediction: head(body(project(X) + g_theta(S)), aux).
  Var predict(Tape<T>& t, const Batch<T>& b) {
    check_batch(b);
    Var H = encode_signals(t, t.constant(b.S));
    Var P = project_sequence(t, t.constant(b.X));
    Var rep = body(t, ops::add(t, P, H), b.seg_len);
    return head(t, rep, t.constant(b.aux));
  }

  Matrix<T> predict_values(const Batch<T>& b) {
    Tape<T> t(false);
    return t.value(predict(t, b));
  }

#ifndef PRISM_NO_INTERVENTION
  bool has_confounder_encoder() const { return confounder_ != nullptr; }

  ConfounderEncoder<T>& confounder_encoder() {
    PRISM_REQUIRE(confounder_ != nullptr, "model has no confounder encoder (n = 0)");
    return *confounder_;
  }

  /// Confounder weights, batch x (n * d'), every entry in (0, 1).
  Var confounder_weights(Tape<T>& t, Var S, Eigen::Index seg_len, BnMode mode, bool update_running = false) {
    return confounder_encoder().forward(t, S, seg_len, mode, update_running);
  }

  Matrix<T> confounder_weight_values(const Batch<T>& b) {
    Tape<T> t(false);
    return t.value(confounder_weights(t, t.constant(b.S), b.seg_len, BnMode::eval));
  }

  /// Backdoor-adjusted prediction by representation averaging:
  /// head(mean_i body(project(X) + g_theta(S) * a_i), aux). `A` is batch x (n * d').
  Var predict_interventional(Tape<T>& t, const Batch<T>& b, Var A) {
    check_batch(b);
    const Eigen::Index n = weight_states(t, A);
    Var H = encode_signals(t, t.constant(b.S));
    Var P = project_sequence(t, t.constant(b.X));
    std::vector<Var> reps;
    for (Eigen::Index i = 0; i < n; ++i) {
      Var a = ops::slice_cols(t, A, i * cfg_.hidden, cfg_.hidden);
      reps.push_back(body(t, ops::add(t, P, ops::mul_segments(t, H, a, b.seg_len)), b.seg_len));
    }
    return head(t, ops::average(t, reps), t.constant(b.aux));
  }

  /// Same adjustment computed by averaging n end-to-end predictions.
  Var predict_interventional_averaged_outputs(Tape<T>& t, const Batch<T>& b, Var A) {
    check_batch(b);
    const Eigen::Index n = weight_states(t, A);
    Var H = encode_signals(t, t.constant(b.S));
    Var P = project_sequence(t, t.constant(b.X));
    Var aux = t.constant(b.aux);
    std::vector<Var> preds;
    for (Eigen::Index i = 0; i < n; ++i) {
      Var a = ops::slice_cols(t, A, i * cfg_.hidden, cfg_.hidden);
      preds.push_back(head(t, body(t, ops::add(t, P, ops::mul_segments(t, H, a, b.seg_len)), b.seg_len), aux));
    }
    return ops::average(t, preds);
  }

  Matrix<T> predict_interventional_values(const Batch<T>& b) {
    Tape<T> t(false);
    Var A = confounder_weights(t, t.constant(b.S), b.seg_len, BnMode::eval);
    return t.value(predict_interventional(t, b, A));
  }
#endif

  /// One training forward: standard and (if n > 0) interventional predictions.
  /// With n > 0 the 1 + n fused sequences share a single backbone call.
  TrainForward forward_train(Tape<T>& t, const Batch<T>& b, BnMode mode, bool update_running) {
    check_batch(b);
    TrainForward out;
    Var H = encode_signals(t, t.constant(b.S));
    Var P = project_sequence(t, t.constant(b.X));
    Var fused = ops::add(t, P, H);
    Var aux = t.constant(b.aux);
#ifndef PRISM_NO_INTERVENTION
    if (confounder_) {
      Var A = confounder_weights(t, t.constant(b.S), b.seg_len, mode, update_running);
      std::vector<Var> streams{fused};
      for (Eigen::Index i = 0; i < cfg_.states; ++i) {
        Var a = ops::slice_cols(t, A, i * cfg_.hidden, cfg_.hidden);
        streams.push_back(ops::add(t, P, ops::mul_segments(t, H, a, b.seg_len)));
      }
      Var pooled = body(t, ops::vstack(t, streams), b.seg_len);
      Var rep0 = ops::slice_rows(t, pooled, 0, b.size);
      std::vector<Var> reps;
      for (Eigen::Index i = 0; i < cfg_.states; ++i) reps.push_back(ops::slice_rows(t, pooled, (i + 1) * b.size, b.size));
      out.prediction = head(t, rep0, aux);
      out.interventional = head(t, ops::average(t, reps), aux);
      out.weights = A;
      out.has_intervention = true;
      return out;
    }
#endif
    (void)mode;
    (void)update_running;
    out.prediction = head(t, body(t, fused, b.seg_len), aux);
    return out;
  }

 private:
  void check_batch(const Batch<T>& b) const {
    PRISM_REQUIRE(b.X.cols() == 4, "predict: sequence must have 4 channels");
    PRISM_REQUIRE(b.S.cols() == cfg_.tracks, "predict: expected " + std::to_string(cfg_.tracks) + " tracks, got " +
                                                 std::to_string(b.S.cols()));
    PRISM_REQUIRE(b.X.rows() == b.S.rows() && b.X.rows() == b.size * b.seg_len, "predict: sequence/signal rows differ");
    PRISM_REQUIRE(b.aux.rows() == b.size, "predict: aux rows differ from batch size");
  }

  Eigen::Index weight_states(Tape<T>& t, Var A) const {
    const auto& a = t.value(A);
    PRISM_REQUIRE(a.cols() > 0, "predict_interventional: need at least one state (n = 0)");
    PRISM_REQUIRE(a.cols() % cfg_.hidden == 0, "predict_interventional: weights must be batch x (n * hidden)");
    return a.cols() / cfg_.hidden;
  }

  ModelConfig cfg_;
  SignalEncoder<T> signal_;
  Linear<T> seq_proj_;
  std::unique_ptr<Backbone<T>> body_;
  Linear<T> head_;
#ifndef PRISM_NO_INTERVENTION
  std::unique_ptr<ConfounderEncoder<T>> confounder_;
#endif
};

struct ParameterCounts {
  std::uint64_t theta = 0;
  std::uint64_t omega = 0;
  std::uint64_t phi = 0;
  std::uint64_t phi_body = 0;
  std::uint64_t total() const { return theta + omega + phi; }
};

template <typename T>
ParameterCounts count_by_owner(PrismModel<T>& m) {
  ParameterCounts c;
  for (auto* p : m.parameters()) {
    const auto n = static_cast<std::uint64_t>(p->size());
    switch (p->owner()) {
      case Owner::theta: c.theta += n; break;
      case Owner::omega: c.omega += n; break;
      case Owner::phi: c.phi += n; break;
    }
    if (p->name().rfind("phi.body.", 0) == 0) c.phi_body += n;
  }
  return c;
}

}  // namespace prism::model
