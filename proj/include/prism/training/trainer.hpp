#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "prism/data/dataset_io.hpp"
#include "prism/errors.hpp"
#include "prism/eval/metrics.hpp"
#include "prism/eval/predict.hpp"
#include "prism/intervention/losses.hpp"
#include "prism/model/batch.hpp"
#include "prism/model/prism_model.hpp"
#include "prism/numerics/checkpoint.hpp"
#include "prism/numerics/optim.hpp"
#include "prism/numerics/rng.hpp"
#include "prism/training/config.hpp"

namespace prism::training {

using Model = model::PrismModel<float>;

struct LogRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, total = 0.0;
  std::optional<double> validation_mse;
};

/// Parameter and buffer values copied out of a model.
struct Snapshot {
  std::vector<Matrix<float>> params;
  std::vector<Matrix<float>> buffers;

  static Snapshot take(Model& m) {
    Snapshot s;
    for (auto* p : m.parameters()) s.params.push_back(p->value());
    for (auto* b : m.buffers()) s.buffers.push_back(b->value);
    return s;
  }

  void restore(Model& m) const {
    auto ps = m.parameters();
    auto bs = m.buffers();
    PRISM_REQUIRE(ps.size() == params.size() && bs.size() == buffers.size(), "snapshot does not match model");
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value() = params[i];
    for (std::size_t i = 0; i < bs.size(); ++i) bs[i]->value = buffers[i];
  }
};

struct TrainState {
  TrainConfig config;
  std::unique_ptr<Model> model;  // final parameters
  Adam<float> adam;
  std::int64_t step = 0;
  std::vector<LogRow> log;
  double best_validation_mse = std::numeric_limits<double>::infinity();
  std::int64_t best_step = -1;
  Snapshot best;
  std::string best_checkpoint_path;  // empty without a run directory

  /// A fresh model holding the best-validation parameters.
  std::unique_ptr<Model> best_model() const {
    auto m = std::make_unique<Model>(config.model);
    best.restore(*m);
    return m;
  }
};

/// Per-epoch permutations of the training set; the last partial batch is kept.
class BatchOrder {
 public:
  BatchOrder(std::size_t count, std::int64_t batch, std::uint64_t seed)
      : count_(count), batch_(static_cast<std::size_t>(batch)), seed_(seed) {}

  std::vector<std::size_t> next() {
    if (pos_ >= perm_.size()) {
      perm_.resize(count_);
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      auto rng = make_rng(seed_, Stream::shuffle, epoch_++);
      for (std::size_t i = count_; i > 1; --i) std::swap(perm_[i - 1], perm_[rng() % i]);
      pos_ = 0;
    }
    const std::size_t hi = std::min(perm_.size(), pos_ + batch_);
    std::vector<std::size_t> out(perm_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 perm_.begin() + static_cast<std::ptrdiff_t>(hi));
    pos_ = hi;
    return out;
  }

 private:
  std::size_t count_, batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

/// Inverted dropout on raw signal entries: keep with probability `retention`,
/// scale survivors by 1 / retention.
inline void drop_signals(Matrix<float>& S, double retention, std::uint64_t seed, std::int64_t step) {
  if (retention >= 1.0) return;
  auto rng = make_rng(seed, Stream::dropout, static_cast<std::uint64_t>(step));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const float keep = static_cast<float>(1.0 / retention);
  for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = u(rng) < retention ? S.data()[i] * keep : 0.0f;
}

inline std::string format_log_row(const LogRow& r) {
  using data::format_double;
  std::ostringstream s;
  s << r.step << '\t' << format_double(r.lr) << '\t' << format_double(r.l1) << '\t' << format_double(r.l2) << '\t'
    << format_double(r.l3) << '\t' << format_double(r.total) << '\t'
    << (r.validation_mse ? format_double(*r.validation_mse) : std::string("-")) << '\n';
  return s.str();
}

inline constexpr std::string_view kLogHeader = "step\tlr\tl1\tl2\tl3\ttotal\tvalidation_mse\n";

inline std::string breakdown_text(const intervention::LossBreakdown<float>& b) {
  std::ostringstream s;
  s << "l1=" << b.l1 << " l2=" << b.l2 << " l3=" << b.l3 << " total=" << b.total;
  return s.str();
}

inline void write_metrics_tsv(std::ostream& out, const std::string& name, const eval::MetricTriple& m) {
  out << name << '\t' << data::format_double(m.mse) << '\t' << data::format_double(m.mae) << '\t'
      << (m.pearson ? data::format_double(*m.pearson) : std::string("nan")) << '\n';
}

/// Train on `train`, select by MSE on `validation`. With a non-empty `run_dir`
/// the run directory receives config.tsv (before any work), log.tsv,
/// best.prck, final.prck, final.prmo and metrics.tsv.
inline TrainState train(const TrainConfig& cfg, const std::vector<data::GeneRecord>& train_set,
                        const std::vector<data::GeneRecord>& validation, const std::string& run_dir = "") {
  cfg.validate();
  PRISM_REQUIRE(!train_set.empty(), "train: empty training set");
  PRISM_REQUIRE(!validation.empty(), "train: empty validation set");
  namespace fs = std::filesystem;
  const bool files = !run_dir.empty();
  std::ofstream log_file;
  if (files) {
    fs::create_directories(run_dir);
    write_text((fs::path(run_dir) / "config.tsv").string(), cfg.to_tsv());
    log_file.open(fs::path(run_dir) / "log.tsv", std::ios::binary | std::ios::trunc);
    log_file << kLogHeader;
  }

  TrainState st;
  st.config = cfg;
  st.model = std::make_unique<Model>(cfg.model);
  st.model->init(cfg.seed);
  Model& m = *st.model;
  const auto params = m.parameters();
  const bool interventional_eval =
#ifndef PRISM_NO_INTERVENTION
      cfg.predict_path == eval::PredictPath::interventional ||
      (cfg.predict_path == eval::PredictPath::automatic && m.has_confounder_encoder());
#else
      false;
#endif
  const auto eval_path = interventional_eval ? eval::PredictPath::interventional : eval::PredictPath::standard;

  BatchOrder order(train_set.size(), cfg.batch_size, cfg.seed);
  intervention::LossBreakdown<float> last_finite;

  auto validate_now = [&](LogRow& row) {
    const auto mt = eval::evaluate(m, validation, eval_path);
    row.validation_mse = mt.mse;
    if (mt.mse < st.best_validation_mse) {
      st.best_validation_mse = mt.mse;
      st.best_step = row.step;
      st.best = Snapshot::take(m);
      if (files) {
        st.best_checkpoint_path = (fs::path(run_dir) / "best.prck").string();
        save_checkpoint(st.best_checkpoint_path, params, m.buffers());
      }
    }
  };
  auto emit = [&](const LogRow& row) {
    st.log.push_back(row);
    if (files) log_file << format_log_row(row);
  };
  auto fail = [&](std::int64_t step, const std::string& why) {
    throw NumericFailure("training diverged at step " + std::to_string(step) + ": " + why +
                         " (last finite losses: " + breakdown_text(last_finite) + ")");
  };

  for (std::int64_t step = 0; step < cfg.max_steps; ++step) {
    auto b = model::make_batch<float>(train_set, order.next());
    drop_signals(b.S, cfg.signal_retention, cfg.seed, step);
    LogRow row;
    row.step = step;
    row.lr = lr_at(cfg.schedule, step);
    intervention::LossBreakdown<float> br;
    try {
      Tape<float> tape;
      Var loss = intervention::total_loss(tape, m, b, cfg.loss, model::BnMode::train, true, br);
      if (!std::isfinite(br.total)) fail(step, "non-finite loss");
      zero_grads(params);
      tape.backward(loss);
    } catch (const NumericFailure& e) {
      if (std::string_view(e.what()).starts_with("training diverged")) throw;
      fail(step, e.what());
    }
    last_finite = br;
    st.adam.step(params, row.lr);
    st.step = step + 1;
    row.l1 = br.l1;
    row.l2 = br.l2;
    row.l3 = br.l3;
    row.total = br.total;
    // Validation after the update of this step.
    if (st.step % cfg.eval_every == 0 && st.step < cfg.max_steps) validate_now(row);
    emit(row);
  }

  // Closing row: schedule endpoint and a forward-only loss on the next batch.
  {
    LogRow row;
    row.step = cfg.max_steps;
    row.lr = lr_at(cfg.schedule, cfg.max_steps);
    auto b = model::make_batch<float>(train_set, order.next());
    Tape<float> tape(false);
    intervention::LossBreakdown<float> br;
    intervention::total_loss(tape, m, b, cfg.loss, model::BnMode::eval, false, br);
    row.l1 = br.l1;
    row.l2 = br.l2;
    row.l3 = br.l3;
    row.total = br.total;
    validate_now(row);
    emit(row);
  }

  if (files) {
    save_checkpoint((fs::path(run_dir) / "final.prck").string(), params, m.buffers());
    save_moments((fs::path(run_dir) / "final.prmo").string(), params, st.adam);
    std::ofstream out(fs::path(run_dir) / "metrics.tsv", std::ios::binary | std::ios::trunc);
    out << "# config " << cfg.hash() << " seed " << cfg.seed << '\n';
    out << "checkpoint\tmse\tmae\tpearson\n";
    write_metrics_tsv(out, "final", eval::evaluate(m, validation, eval_path));
    auto bm = st.best_model();
    write_metrics_tsv(out, "best", eval::evaluate(*bm, validation, eval_path));
  }
  return st;
}

/// Model with the parameters stored in a checkpoint file.
inline std::unique_ptr<Model> load_model(const model::ModelConfig& mc, const std::string& checkpoint) {
  auto m = std::make_unique<Model>(mc);
  load_checkpoint(checkpoint, m->parameters(), m->buffers());
  return m;
}

inline TrainConfig load_config(const std::string& path) {
  TrainConfig c;
  c.apply_tsv(data::read_text_file(path));
  return c;
}

/// Metrics of a saved checkpoint in evaluation mode.
inline eval::MetricTriple evaluate_checkpoint(const TrainConfig& cfg, const std::string& checkpoint,
                                              const std::vector<data::GeneRecord>& records) {
  PRISM_REQUIRE(!records.empty(), "evaluate_checkpoint: empty dataset");
  auto m = load_model(cfg.model, checkpoint);
  return eval::evaluate(*m, records, cfg.predict_path);
}

struct SeedRun {
  std::uint64_t seed = 0;
  eval::MetricTriple test;
  std::string error;  // non-empty when the run failed
};

struct MultiSeedResult {
  std::vector<SeedRun> runs;
  eval::SeedStats mse, mae, pearson;
};

inline MultiSeedResult summarize(std::vector<SeedRun> runs) {
  MultiSeedResult r;
  std::vector<double> mse, mae, pr;
  for (const auto& s : runs) {
    if (!s.error.empty()) continue;
    mse.push_back(s.test.mse);
    mae.push_back(s.test.mae);
    pr.push_back(s.test.pearson.value_or(std::numeric_limits<double>::quiet_NaN()));
  }
  r.mse = eval::seed_stats(mse);
  r.mae = eval::seed_stats(mae);
  r.pearson = eval::seed_stats(pr);
  r.runs = std::move(runs);
  return r;
}

/// Train once per seed and evaluate the best-validation model on `test`.
inline MultiSeedResult multi_seed(TrainConfig cfg, const std::vector<std::uint64_t>& seeds,
                                  const std::vector<data::GeneRecord>& train_set,
                                  const std::vector<data::GeneRecord>& validation,
                                  const std::vector<data::GeneRecord>& test, const std::string& run_root = "") {
  PRISM_REQUIRE(seeds.size() >= 2, "multi_seed: need at least two seeds");
  std::vector<SeedRun> runs;
  for (auto seed : seeds) {
    cfg.seed = seed;
    const std::string dir =
        run_root.empty() ? std::string() : (std::filesystem::path(run_root) / ("seed_" + std::to_string(seed))).string();
    auto st = train(cfg, train_set, validation, dir);
    auto best = st.best_model();
    runs.push_back({seed, eval::evaluate(*best, test, cfg.predict_path), ""});
  }
  return summarize(std::move(runs));
}

}  // namespace prism::training
