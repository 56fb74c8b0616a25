#include <cmath>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "prism/numerics/checkpoint.hpp"
#include "prism/numerics/finite_diff.hpp"
#include "prism/numerics/ops.hpp"
#include "prism/numerics/optim.hpp"
#include "support.hpp"

using namespace prism;
using prism::testing::gradcheck;
using prism::testing::random_matrix;
using prism::testing::TempDir;

namespace {

Parameter<double> vec_param(std::initializer_list<double> v) {
  Parameter<double> p("p", Owner::phi, {static_cast<std::uint32_t>(v.size())}, 1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p.value()(0, i++) = x;
  return p;
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  auto p = vec_param({0.3, -2.0, 7.5});
  Tape<double> t;
  t.backward(ops::sum(t, t.param(p)));
  EXPECT_EQ(p.grad(), Matrix<double>::Ones(1, 3));
}

TEST(Backward, SquareGivesTwiceValue) {
  auto p = vec_param({1, 2, 3});
  Tape<double> t;
  Var x = t.param(p);
  t.backward(ops::sum(t, ops::mul(t, x, x)));
  EXPECT_DOUBLE_EQ(p.grad()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(p.grad()(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(p.grad()(0, 2), 6.0);
}

TEST(Backward, UnreachableParameterHasZeroGradient) {
  auto p = vec_param({1, 2});
  auto q = vec_param({5, 6});
  Tape<double> t;
  t.param(q);
  t.backward(ops::sum(t, t.param(p)));
  EXPECT_TRUE(q.grad().isZero());
}

TEST(Backward, NonScalarLossIsRejected) {
  auto p = vec_param({1, 2});
  Tape<double> t;
  Var x = t.param(p);
  EXPECT_THROW(t.backward(x), ContractViolation);
}

TEST(Backward, OverflowNamesTheOp) {
  auto p = vec_param({1000.0});
  Tape<double> t;
  try {
    ops::exp(t, t.param(p));
    FAIL() << "expected a numeric failure";
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("exp"), std::string::npos);
  }
}

TEST(Backward, RepeatedBackwardIsBitwiseStable) {
  std::mt19937_64 rng(5);
  Parameter<double> w("w", Owner::phi, {3, 2}, 3, 2);
  w.value() = random_matrix(3, 2, rng);
  Tape<double> t;
  Var x = t.constant(random_matrix(4, 3, rng));
  Var loss = ops::sum(t, ops::sigmoid(t, ops::matmul(t, x, t.param(w))));
  t.backward(loss);
  Matrix<double> first = w.grad();
  w.zero_grad();
  t.backward(loss);
  EXPECT_EQ(std::memcmp(first.data(), w.grad().data(), sizeof(double) * 6), 0);
}

TEST(FiniteDiff, Square) {
  EXPECT_NEAR(finite_diff_derivative([](double p) { return p * p; }, 3.0, 1e-5), 6.0, 1e-9);
}

TEST(FiniteDiff, Sine) {
  EXPECT_NEAR(finite_diff_derivative([](double p) { return std::sin(p); }, 0.0, 1e-5), 1.0, 1e-9);
}

TEST(FiniteDiff, ParameterCentralDifference) {
  auto p = vec_param({1.0, -2.0});
  ParamList<double> ps{&p};
  auto g = finite_diff_gradient<double>(
      [&] { return p.value()(0, 0) * p.value()(0, 0) * p.value()(0, 1); }, ps, 1e-5);
  EXPECT_NEAR(g[0](0, 0), -4.0, 1e-8);
  EXPECT_NEAR(g[0](0, 1), 1.0, 1e-8);
  EXPECT_EQ(p.value()(0, 0), 1.0);
}

TEST(FiniteDiff, KinkInsideTheStencilIsReStepped) {
  // |p - 3e-6| at p = 0: a 1e-5 stencil crosses the kink and reads -0.3.
  auto p = vec_param({0.0});
  ParamList<double> ps{&p};
  auto f = [&] { return std::abs(p.value()(0, 0) - 3e-6); };
  auto g = finite_diff_gradient<double>(f, ps, 1e-5);
  EXPECT_NEAR(g[0](0, 0), -0.3, 1e-9);
  p.grad()(0, 0) = -1.0;
  EXPECT_EQ(refine_at_kinks<double>(f, ps, g, 1e-5, 1e-6, 1e-4), 1u);
  EXPECT_NEAR(g[0](0, 0), -1.0, 1e-9);
  EXPECT_EQ(p.value()(0, 0), 0.0);
}

TEST(FiniteDiff, WrongAnalyticGradientIsNotExcused) {
  auto p = vec_param({1.0});
  ParamList<double> ps{&p};
  auto f = [&] { return p.value()(0, 0) * p.value()(0, 0); };
  auto g = finite_diff_gradient<double>(f, ps, 1e-5);
  p.grad()(0, 0) = 2.5;
  refine_at_kinks<double>(f, ps, g, 1e-5, 1e-6, 1e-4);
  EXPECT_NEAR(g[0](0, 0), 2.0, 1e-8);
  EXPECT_GT(compare_gradients(ps, g, 1e-6).max_relative_error, 0.1);
}

TEST(FiniteDiff, NonFiniteObjectiveFails) {
  auto p = vec_param({1.0});
  ParamList<double> ps{&p};
  EXPECT_THROW(finite_diff_gradient<double>([] { return std::nan(""); }, ps, 1e-5), NumericFailure);
  EXPECT_THROW(finite_diff_gradient<double>([] { return 0.0; }, ps, 0.0), ContractViolation);
}

TEST(Schedule, TableValues) {
  LrSchedule s;
  EXPECT_NEAR(lr_at(s, 0), 1e-5, 1e-12);
  EXPECT_NEAR(lr_at(s, 5000), 5e-4, 1e-12);
  EXPECT_NEAR(lr_at(s, 27500), 3e-4, 1e-12);
  EXPECT_NEAR(lr_at(s, 50000), 1e-4, 1e-12);
}

TEST(Schedule, MatchesIndependentFormula) {
  LrSchedule s;
  for (std::int64_t step = 0; step <= 50000; step += 137) {
    double expect;
    if (step < 5000)
      expect = 1e-5 + step * (5e-4 - 1e-5) / 5000.0;
    else
      expect = 1e-4 + 0.5 * 4e-4 * (1 + std::cos(std::numbers::pi * (step - 5000) / 45000.0));
    EXPECT_NEAR(lr_at(s, step), expect, 1e-15) << step;
  }
}

TEST(Schedule, ContinuousAtWarmupEnd) {
  LrSchedule s;
  EXPECT_NEAR(lr_at(s, 4999), lr_at(s, 5000), 1e-7);
  EXPECT_NEAR(lr_at(s, 5001), lr_at(s, 5000), 1e-9);
}

TEST(Schedule, RejectsOutOfRange) {
  LrSchedule s;
  EXPECT_THROW(lr_at(s, -1), ContractViolation);
  EXPECT_THROW(lr_at(s, 50001), ContractViolation);
  s.warmup_steps = 0;
  EXPECT_THROW(s.validate(), ContractViolation);
  s = LrSchedule{};
  s.floor = 1.0;
  EXPECT_THROW(s.validate(), ContractViolation);
}

TEST(Adam, ZeroGradientLeavesEverythingUnchanged) {
  auto p = vec_param({0.5, -1.5});
  Adam<double> adam;
  adam.step({&p}, 0.1);
  EXPECT_EQ(p.value()(0, 0), 0.5);
  EXPECT_EQ(p.value()(0, 1), -1.5);
  EXPECT_TRUE(adam.first_moments()[0].isZero());
  EXPECT_TRUE(adam.second_moments()[0].isZero());
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  auto p = vec_param({0.0});
  p.grad()(0, 0) = 1.0;
  Adam<double> adam;
  adam.step({&p}, 0.1);
  // m_hat = 1, v_hat = 1: update = 0.1 / (1 + 1e-8).
  EXPECT_NEAR(p.value()(0, 0), -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, ConvergesOnQuadratic) {
  auto p = vec_param({1.0});
  Adam<double> adam;
  for (int i = 0; i < 100; ++i) {
    p.grad()(0, 0) = 2.0 * p.value()(0, 0);
    adam.step({&p}, 0.05);
  }
  EXPECT_LT(std::abs(p.value()(0, 0)), 0.1);
  EXPECT_EQ(adam.steps_taken(), 100);
}

TEST(Adam, RejectsMismatchedGradient) {
  auto p = vec_param({1.0, 2.0});
  p.grad().resize(0, 0);
  Adam<double> adam;
  EXPECT_THROW(adam.step({&p}, 0.1), ContractViolation);
}

// Each differentiable op against central differences on random inputs.
class OpGradient : public ::testing::TestWithParam<int> {
 protected:
  std::mt19937_64 rng{static_cast<std::uint64_t>(GetParam()) * 7919u + 1};
  Parameter<double> make(const std::string& name, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
    Parameter<double> p(name, Owner::phi, {static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)}, r, c);
    p.value() = random_matrix(r, c, rng, lo, hi);
    return p;
  }
  // Random projection so every output coordinate contributes.
  Var project(Tape<double>& t, Var y, const Matrix<double>& R) { return ops::sum(t, ops::mul(t, y, t.constant(R))); }
  void expect_ok(const GradCheckResult& r) {
    EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter << "[" << r.worst_index << "] analytic "
                                          << r.worst_analytic << " numeric " << r.worst_numeric;
  }
};

TEST_P(OpGradient, LinearSigmoidMul) {
  auto x = make("x", 5, 3);
  auto w = make("w", 3, 4);
  auto b = make("b", 1, 4);
  Matrix<double> R = random_matrix(5, 4, rng);
  expect_ok(gradcheck({&x, &w, &b}, [&](Tape<double>& t) {
    Var z = ops::linear(t, t.param(x), t.param(w), t.param(b));
    return project(t, ops::mul(t, z, ops::sigmoid(t, z)), R);
  }));
}

TEST_P(OpGradient, ExpLogScaleSub) {
  auto x = make("x", 4, 3, 0.2, 2.0);
  auto y = make("y", 4, 3);
  Matrix<double> R = random_matrix(4, 3, rng);
  expect_ok(gradcheck({&x, &y}, [&](Tape<double>& t) {
    Var a = ops::log(t, t.param(x));
    Var b = ops::exp(t, ops::scale(t, t.param(y), 0.7));
    return project(t, ops::add_scalar(t, ops::sub(t, a, b), 0.3), R);
  }));
}

TEST_P(OpGradient, ReluAwayFromKink) {
  auto x = make("x", 6, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x.value().data()[i]) < 0.05) x.value().data()[i] = 0.5;
  Matrix<double> R = random_matrix(6, 2, rng);
  expect_ok(gradcheck({&x}, [&](Tape<double>& t) { return project(t, ops::relu(t, t.param(x)), R); }));
}

TEST_P(OpGradient, MeanRowSumNormalize) {
  auto x = make("x", 4, 5);
  Matrix<double> R = random_matrix(4, 5, rng);
  expect_ok(gradcheck({&x}, [&](Tape<double>& t) {
    Var n = ops::row_l2_normalize(t, t.param(x));
    Var s = ops::row_sum(t, ops::mul(t, n, t.constant(R)));
    return ops::mean(t, ops::mul(t, s, s));
  }));
}

TEST_P(OpGradient, ConcatSliceStack) {
  auto a = make("a", 3, 2);
  auto b = make("b", 3, 4);
  Matrix<double> R = random_matrix(9, 3, rng);
  expect_ok(gradcheck({&a, &b}, [&](Tape<double>& t) {
    Var c = ops::concat_cols(t, t.param(a), t.param(b));
    Var left = ops::slice_cols(t, c, 1, 3);
    Var right = ops::slice_cols(t, c, 3, 3);
    Var st = ops::vstack(t, {left, right, ops::slice_rows(t, left, 0, 3)});
    return project(t, ops::mul(t, st, st), R);
  }));
}

TEST_P(OpGradient, SegmentOps) {
  const Eigen::Index L = 7;
  auto h = make("h", 2 * L, 3);
  auto a = make("a", 2, 3);
  auto w = make("w", 5, 3);
  Matrix<double> R = random_matrix(2, 3, rng);
  expect_ok(gradcheck({&h, &a, &w}, [&](Tape<double>& t) {
    Var m = ops::mul_segments(t, t.param(h), t.param(a), L);
    Var c = ops::depthwise_conv(t, m, t.param(w), L);
    return project(t, ops::mean_pool(t, ops::sigmoid(t, c), L), R);
  }));
}

TEST_P(OpGradient, Im2colConv) {
  const Eigen::Index L = 6;
  auto x = make("x", 2 * L, 2);
  auto w = make("w", 3 * 2, 4);
  auto b = make("b", 1, 4);
  Matrix<double> R = random_matrix(2 * L, 4, rng);
  expect_ok(gradcheck({&x, &w, &b}, [&](Tape<double>& t) {
    Var c = ops::linear(t, ops::im2col(t, t.param(x), 3, L), t.param(w), t.param(b));
    return project(t, ops::sigmoid(t, c), R);
  }));
}

TEST_P(OpGradient, MaxPool) {
  const Eigen::Index L = 9;  // floor: 2 windows of 4, one row dropped
  auto x = make("x", 2 * L, 3);
  Matrix<double> R = random_matrix(4, 3, rng);
  expect_ok(gradcheck({&x}, [&](Tape<double>& t) { return project(t, ops::max_pool(t, t.param(x), 4, L), R); }));
}

TEST_P(OpGradient, BatchNormTrainAndEval) {
  auto x = make("x", 10, 3);
  auto g = make("g", 1, 3, 0.5, 1.5);
  auto b = make("b", 1, 3);
  Matrix<double> R = random_matrix(10, 3, rng);
  Matrix<double> rm = random_matrix(1, 3, rng);
  Matrix<double> rv = random_matrix(1, 3, rng, 0.5, 2.0);
  expect_ok(gradcheck({&x, &g, &b}, [&](Tape<double>& t) {
    Var y = ops::batch_norm_train(t, t.param(x), t.param(g), t.param(b), 1e-5);
    Var z = ops::batch_norm_eval(t, y, t.param(g), t.param(b), rm, rv, 1e-5);
    return project(t, ops::sigmoid(t, z), R);
  }));
}

TEST_P(OpGradient, HuberAndAverage) {
  auto p = make("p", 6, 1, -3, 3);
  auto q = make("q", 6, 1, -3, 3);
  Matrix<double> y = random_matrix(6, 1, rng, -3, 3);
  for (Eigen::Index i = 0; i < 6; ++i)
    if (std::abs(std::abs(p.value()(i, 0) - y(i, 0)) - 1.0) < 0.05) y(i, 0) += 0.2;
  expect_ok(gradcheck({&p, &q}, [&](Tape<double>& t) {
    Var avg = ops::average(t, {t.param(p), ops::scale(t, t.param(q), 0.1)});
    return ops::huber_mean(t, avg, y, 1.0);
  }));
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(0, 20));

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  std::mt19937_64 rng(3);
  Parameter<float> a("theta.a", Owner::theta, {2, 3}, 2, 3);
  Parameter<float> b("phi.b", Owner::phi, {4}, 1, 4);
  a.value() = random_matrix(2, 3, rng).cast<float>();
  b.value() = random_matrix(1, 4, rng).cast<float>();
  Buffer<float> buf{"omega.bn.running_var", {4}, random_matrix(1, 4, rng, 0, 2).cast<float>()};
  save_checkpoint<float>(dir / "m.prck", {&a, &b}, {&buf});

  Parameter<float> a2("theta.a", Owner::theta, {2, 3}, 2, 3);
  Parameter<float> b2("phi.b", Owner::phi, {4}, 1, 4);
  Buffer<float> buf2{"omega.bn.running_var", {4}, Matrix<float>::Zero(1, 4)};
  load_checkpoint<float>(dir / "m.prck", {&a2, &b2}, {&buf2});
  EXPECT_EQ(std::memcmp(a.value().data(), a2.value().data(), 6 * sizeof(float)), 0);
  EXPECT_EQ(std::memcmp(b.value().data(), b2.value().data(), 4 * sizeof(float)), 0);
  EXPECT_EQ(std::memcmp(buf.value.data(), buf2.value.data(), 4 * sizeof(float)), 0);
}

TEST(Checkpoint, CorruptionIsAFormatError) {
  TempDir dir("ckpt-bad");
  Parameter<float> a("theta.a", Owner::theta, {3}, 1, 3);
  a.value() << 1, 2, 3;
  save_checkpoint<float>(dir / "m.prck", {&a}, {});
  std::string bytes = prism::testing::read_bytes(dir / "m.prck");

  auto write = [&](const std::string& s) {
    std::ofstream(dir / "x.prck", std::ios::binary) << s;
    return dir / "x.prck";
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint<float>(write(bad_magic), {&a}, {}), FormatError);
  EXPECT_THROW(load_checkpoint<float>(write(bytes.substr(0, bytes.size() - 2)), {&a}, {}), FormatError);
  std::string bad_len = bytes;
  bad_len[8] = '\x7f';  // name length
  EXPECT_THROW(load_checkpoint<float>(write(bad_len), {&a}, {}), FormatError);
  Parameter<float> wrong("theta.a", Owner::theta, {4}, 1, 4);
  EXPECT_THROW(load_checkpoint<float>(dir / "m.prck", {&wrong}, {}), FormatError);
  EXPECT_THROW(load_checkpoint<float>(dir / "missing.prck", {&a}, {}), FormatError);
}

TEST(Checkpoint, MomentsRoundTrip) {
  TempDir dir("moments");
  Parameter<float> a("a", Owner::phi, {2}, 1, 2);
  a.grad() << 0.5f, -1.0f;
  Adam<float> adam;
  adam.step({&a}, 0.01);
  adam.step({&a}, 0.01);
  save_moments<float>(dir / "m.prmo", {&a}, adam);
  Adam<float> back;
  load_moments<float>(dir / "m.prmo", {&a}, back);
  EXPECT_EQ(back.steps_taken(), 2);
  EXPECT_EQ(back.first_moments()[0], adam.first_moments()[0]);
  EXPECT_EQ(back.second_moments()[0], adam.second_moments()[0]);
}
