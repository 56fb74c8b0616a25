#include <cstring>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "prism/data/split.hpp"
#include "prism/synth/scm.hpp"
#include "prism/training/trainer.hpp"
#include "support.hpp"

using namespace prism;
using namespace prism::training;

namespace {

const data::SplitResult& tiny_data() {
  static const data::SplitResult parts = [] {
    synth::ScmConfig sc;
    sc.genes = 120;
    sc.L = 64;
    sc.seed = 5;
    return data::split(synth::generate(sc).dataset.records);
  }();
  return parts;
}

TrainConfig tiny_config(std::int64_t states = 2) {
  auto c = TrainConfig::desk(30);
  c.model.hidden = 8;
  c.model.backbone_layers = 2;
  c.model.states = states;
  c.batch_size = 4;
  c.eval_every = 10;
  return c;
}

bool bitwise_equal(const std::vector<LogRow>& a, const std::vector<LogRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x[] = {a[i].lr, a[i].l1, a[i].l2, a[i].l3, a[i].total, a[i].validation_mse.value_or(-1)};
    const double y[] = {b[i].lr, b[i].l1, b[i].l2, b[i].l3, b[i].total, b[i].validation_mse.value_or(-1)};
    if (a[i].step != b[i].step || std::memcmp(x, y, sizeof x) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(TrainConfig, DefaultsAndDeskProfile) {
  TrainConfig c;
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.max_steps, 50000);
  EXPECT_EQ(c.schedule.warmup_steps, 5000);
  EXPECT_EQ(c.schedule.peak, 5e-4);
  EXPECT_EQ(c.model.states, 2);
  EXPECT_EQ(c.model.hidden, 128);
  EXPECT_NO_THROW(c.validate());
  auto d = TrainConfig::desk();
  EXPECT_EQ(d.max_steps, 3000);
  EXPECT_EQ(d.schedule.total_steps, 3000);
  EXPECT_EQ(d.model.hidden, 32);
  EXPECT_EQ(d.schedule.peak, 1e-3);
  EXPECT_EQ(d.schedule.warmup_steps, 300);
  EXPECT_EQ(d.schedule.floor, c.schedule.floor);
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(kDefaultSeeds, (std::vector<std::uint64_t>{2, 22, 222, 2222, 22222}));
}

TEST(TrainConfig, TsvRoundTrip) {
  auto c = TrainConfig::desk(1234);
  c.loss.alpha = 0.1;
  c.loss.beta = 10.0;
  c.model.states = 3;
  c.seed = 22222;
  c.signal_retention = 0.7;
  c.predict_path = eval::PredictPath::standard;
  TrainConfig back;
  back.apply_tsv(c.to_tsv());
  EXPECT_EQ(back.to_tsv(), c.to_tsv());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.max_steps, 1234);
  EXPECT_EQ(back.schedule.total_steps, 1234);
}

TEST(TrainConfig, RejectsBadInput) {
  TrainConfig c;
  EXPECT_THROW(c.set("nope", "1"), ContractViolation);
  EXPECT_THROW(c.set("alpha", "x"), ContractViolation);
  EXPECT_THROW(c.apply_tsv("alpha\n"), ContractViolation);
  c.set("n", "-1");
  EXPECT_THROW(c.validate(), ContractViolation);
  c = TrainConfig{};
  c.signal_retention = 0.0;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = TrainConfig{};
  c.max_steps = 100;
  EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(BatchOrder, EpochsCoverEverythingAndKeepPartialBatch) {
  BatchOrder order(10, 4, 3);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> seen;
    std::vector<std::size_t> sizes;
    for (int b = 0; b < 3; ++b) {
      auto idx = order.next();
      sizes.push_back(idx.size());
      seen.insert(idx.begin(), idx.end());
    }
    EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
    EXPECT_EQ(seen.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 1u);
  }
  BatchOrder a(50, 8, 1), b(50, 8, 1), c(50, 8, 2);
  EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(a.next(), c.next());
}

TEST(DropSignals, RetentionOneIsIdentityAndHalfZeroesAboutHalf) {
  Matrix<float> S = Matrix<float>::Constant(100, 50, 2.0f);
  Matrix<float> copy = S;
  drop_signals(copy, 1.0, 1, 0);
  EXPECT_EQ(copy, S);
  drop_signals(copy, 0.5, 1, 0);
  const auto zeros = (copy.array() == 0.0f).count();
  EXPECT_NEAR(static_cast<double>(zeros) / 5000.0, 0.5, 0.03);
  EXPECT_TRUE(((copy.array() == 0.0f) || (copy.array() == 4.0f)).all());
}

TEST(Train, SameSeedSameTrajectory) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  auto a = train(cfg, d.train, d.validation);
  auto b = train(cfg, d.train, d.validation);
  EXPECT_TRUE(bitwise_equal(a.log, b.log));
  cfg.seed = 3;
  auto c = train(cfg, d.train, d.validation);
  EXPECT_FALSE(bitwise_equal(a.log, c.log));
}

TEST(Train, LogFollowsScheduleAndValidationCadence) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  auto st = train(cfg, d.train, d.validation);
  ASSERT_EQ(st.log.size(), 31u);
  for (std::size_t i = 0; i < st.log.size(); ++i) {
    EXPECT_EQ(st.log[i].step, static_cast<std::int64_t>(i));
    EXPECT_EQ(st.log[i].lr, lr_at(cfg.schedule, static_cast<std::int64_t>(i)));
    EXPECT_EQ(st.log[i].validation_mse.has_value(), i == 9 || i == 19 || i == 30) << i;
    EXPECT_NEAR(st.log[i].total, (st.log[i].l1 + st.log[i].l2) + st.log[i].l3, 1e-5);
  }
  EXPECT_EQ(st.log.back().lr, cfg.schedule.floor);
  EXPECT_EQ(st.step, 30);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : st.log)
    if (r.validation_mse) best = std::min(best, *r.validation_mse);
  EXPECT_EQ(st.best_validation_mse, best);
}

TEST(Train, BaselineLogsOnlyTheStandardLoss) {
  const auto& d = tiny_data();
  auto cfg = tiny_config(0);
  cfg.loss.alpha = 0.0;
  cfg.loss.beta = 0.0;
  auto st = train(cfg, d.train, d.validation);
  for (const auto& r : st.log) {
    EXPECT_EQ(r.l2, 0.0);
    EXPECT_EQ(r.l3, 0.0);
    EXPECT_EQ(r.total, r.l1);
  }
}

TEST(Train, RunDirectoryRoundTrip) {
  prism::testing::TempDir dir("train");
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  auto st = train(cfg, d.train, d.validation, dir.str());
  for (const char* f : {"config.tsv", "log.tsv", "best.prck", "final.prck", "final.prmo", "metrics.tsv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(prism::testing::read_bytes(dir / "config.tsv"), cfg.to_tsv());
  auto log = prism::testing::read_bytes(dir / "log.tsv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 32);

  auto back = load_config(dir / "config.tsv");
  EXPECT_EQ(back.to_tsv(), cfg.to_tsv());
  // Saved best checkpoint evaluates exactly like the in-memory snapshot.
  auto best = st.best_model();
  auto mem = eval::evaluate(*best, d.validation);
  auto disk = evaluate_checkpoint(back, st.best_checkpoint_path, d.validation);
  auto again = evaluate_checkpoint(back, st.best_checkpoint_path, d.validation);
  EXPECT_EQ(mem.mse, st.best_validation_mse);
  EXPECT_EQ(disk.mse, mem.mse);
  EXPECT_EQ(disk.mae, mem.mae);
  EXPECT_EQ(disk.pearson, mem.pearson);
  EXPECT_EQ(again.mse, disk.mse);
  auto final_metrics = evaluate_checkpoint(back, dir / "final.prck", d.validation);
  EXPECT_LE(disk.mse, final_metrics.mse);
  EXPECT_THROW(evaluate_checkpoint(back, st.best_checkpoint_path, {}), ContractViolation);

  // Moments reload into a fresh optimizer.
  auto m = load_model(cfg.model, dir / "final.prck");
  Adam<float> adam;
  load_moments(dir / "final.prmo", m->parameters(), adam);
  EXPECT_EQ(adam.steps_taken(), 30);
  EXPECT_EQ(adam.first_moments().size(), st.adam.first_moments().size());

  // A model with another shape refuses the checkpoint.
  auto other = cfg;
  other.model.hidden = 16;
  EXPECT_THROW(evaluate_checkpoint(other, st.best_checkpoint_path, d.validation), FormatError);
}

TEST(Train, DivergenceNamesTheStep) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  cfg.schedule.warmup_start = 1e30;
  cfg.schedule.peak = 1e30;
  cfg.schedule.floor = 1e30;
  try {
    train(cfg, d.train, d.validation);
    FAIL() << "expected divergence";
  } catch (const NumericFailure& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("at step "), std::string::npos) << msg;
    EXPECT_NE(msg.find("last finite losses"), std::string::npos) << msg;
  }
}

TEST(Train, EmptyInputsAreRejected) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  EXPECT_THROW(train(cfg, {}, d.validation), ContractViolation);
  EXPECT_THROW(train(cfg, d.train, {}), ContractViolation);
}

TEST(MultiSeed, TwoSeedsGiveStats) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  auto r = multi_seed(cfg, {2, 22}, d.train, d.validation, d.test);
  ASSERT_EQ(r.runs.size(), 2u);
  EXPECT_EQ(r.mse.count, 2u);
  EXPECT_NEAR(r.mse.mean, (r.runs[0].test.mse + r.runs[1].test.mse) / 2, 1e-12);
  EXPECT_THROW(multi_seed(cfg, {2}, d.train, d.validation, d.test), ContractViolation);
}
