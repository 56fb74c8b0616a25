#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "prism/data/split.hpp"
#include "prism/eval/metrics.hpp"
#include "prism/eval/protocols.hpp"
#include "prism/numerics/binio.hpp"
#include "prism/numerics/checkpoint.hpp"
#include "prism/training/trainer.hpp"

namespace prism::eval {

/// One report line. Per-seed rows carry the seed and checkpoint hash; the
/// aggregate rows use seed "mean" and "sd".
struct ReportRow {
  std::string protocol;
  std::string parameter;
  std::string seed;
  std::string checkpoint;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double mae = std::numeric_limits<double>::quiet_NaN();
  double pearson = std::numeric_limits<double>::quiet_NaN();
  double retention = std::numeric_limits<double>::quiet_NaN();  // learned-weight rows only
  std::string status = "ok";
};

struct AblationReport {
  std::string protocol;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<ReportRow> rows;

  std::vector<const ReportRow*> aggregate(const std::string& which) const {
    std::vector<const ReportRow*> out;
    for (const auto& r : rows)
      if (r.seed == which) out.push_back(&r);
    return out;
  }
};

inline ReportRow metric_row(std::string protocol, std::string parameter, std::string seed, std::string checkpoint,
                            const MetricTriple& m) {
  ReportRow r{std::move(protocol), std::move(parameter), std::move(seed), std::move(checkpoint)};
  r.mse = m.mse;
  r.mae = m.mae;
  r.pearson = m.pearson.value_or(std::numeric_limits<double>::quiet_NaN());
  return r;
}

/// Append mean and sd rows over the successful per-seed rows of `parameter`.
inline void add_seed_summary(AblationReport& rep, const std::string& parameter) {
  std::vector<double> mse, mae, pr, keep;
  for (const auto& r : rep.rows)
    if (r.parameter == parameter && r.status == "ok" && r.seed != "mean" && r.seed != "sd")
      mse.push_back(r.mse), mae.push_back(r.mae), pr.push_back(r.pearson), keep.push_back(r.retention);
  ReportRow mean{rep.protocol, parameter, "mean", "-"};
  ReportRow sd{rep.protocol, parameter, "sd", "-"};
  if (mse.size() >= 2) {
    auto a = seed_stats(mse), b = seed_stats(mae), c = seed_stats(pr);
    mean.mse = a.mean, mean.mae = b.mean, mean.pearson = c.mean;
    sd.mse = a.sd, sd.mae = b.sd, sd.pearson = c.sd;
    if (std::isfinite(keep.front())) {
      auto k = seed_stats(keep);
      mean.retention = k.mean, sd.retention = k.sd;
    }
  } else {
    mean.status = sd.status = "fewer than two successful seeds";
  }
  rep.rows.push_back(mean);
  rep.rows.push_back(sd);
}

inline std::string checkpoint_hash(training::Model& m) {
  const auto bytes = encode_checkpoint(m.parameters(), m.buffers()).data();
  return binio::hex64(binio::fnv1a(std::string_view(bytes.data(), bytes.size())));
}

inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  return s;
}

inline std::string format_report(const AblationReport& rep) {
  using data::format_double;
  std::ostringstream s;
  s << "# protocol " << rep.protocol << " config " << rep.config_hash << " seeds " << join_seeds(rep.seeds) << '\n';
  s << "protocol\tparameter\tseed\tcheckpoint\tmse\tmae\tpearson\tretention\tstatus\n";
  for (const auto& r : rep.rows)
    s << r.protocol << '\t' << r.parameter << '\t' << r.seed << '\t' << r.checkpoint << '\t' << format_double(r.mse)
      << '\t' << format_double(r.mae) << '\t' << format_double(r.pearson) << '\t'
      << (std::isfinite(r.retention) ? format_double(r.retention) : std::string("-")) << '\t' << r.status << '\n';
  return s.str();
}

/// Series for external plotting: one line per (metric, parameter) with the
/// seed mean and sd.
inline std::string format_plot_data(const AblationReport& rep) {
  using data::format_double;
  std::ostringstream s;
  s << "# protocol " << rep.protocol << " config " << rep.config_hash << '\n';
  s << "series\tx\ty\tyerr\n";
  const auto means = rep.aggregate("mean");
  const auto sds = rep.aggregate("sd");
  for (const char* metric : {"mse", "mae", "pearson"})
    for (std::size_t i = 0; i < means.size(); ++i) {
      auto pick = [&](const ReportRow& r) {
        return std::string(metric) == "mse" ? r.mse : std::string(metric) == "mae" ? r.mae : r.pearson;
      };
      s << metric << '\t' << means[i]->parameter << '\t' << format_double(pick(*means[i])) << '\t'
        << format_double(pick(*sds[i])) << '\n';
    }
  return s.str();
}

inline void write_report(const AblationReport& rep, const std::string& path, bool plot_data = false) {
  training::write_text(path, format_report(rep));
  if (plot_data) {
    auto p = std::filesystem::path(path);
    training::write_text((p.parent_path() / (p.stem().string() + ".plot.tsv")).string(), format_plot_data(rep));
  }
}

/// Trained model for one seed plus what the report needs to regenerate it.
struct TrainedRun {
  std::uint64_t seed = 0;
  std::unique_ptr<training::Model> model;  // best-validation parameters
  std::string checkpoint;
};

/// Train `cfg` once per seed; run directories go under run_root/<label>/seed_<s>
/// when run_root is set. Failures are returned as runs without a model.
inline std::vector<TrainedRun> train_seeds(training::TrainConfig cfg, const std::vector<std::uint64_t>& seeds,
                                           const data::SplitResult& parts, const std::string& run_root = "",
                                           const std::string& label = "run",
                                           std::vector<std::string>* errors = nullptr) {
  std::vector<TrainedRun> out;
  for (auto seed : seeds) {
    cfg.seed = seed;
    const std::string dir =
        run_root.empty() ? std::string()
                         : (std::filesystem::path(run_root) / label / ("seed_" + std::to_string(seed))).string();
    TrainedRun run;
    run.seed = seed;
    try {
      auto st = training::train(cfg, parts.train, parts.validation, dir);
      run.model = st.best_model();
      run.checkpoint = checkpoint_hash(*run.model);
    } catch (const std::exception& e) {
      if (errors == nullptr) throw;
      errors->push_back(e.what());
      run.model.reset();
    }
    out.push_back(std::move(run));
  }
  return out;
}

/// Signal-removal rows per seed: intact metrics and metrics with `tracks` zeroed.
inline AblationReport removal_report(const training::TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                     const data::SplitResult& parts, const std::vector<std::int64_t>& tracks,
                                     const std::string& run_root = "") {
  AblationReport rep{"remove-signal", cfg.hash(), seeds, {}};
  std::string removed = "removed:";
  for (std::size_t i = 0; i < tracks.size(); ++i) removed += (i ? "," : "") + std::to_string(tracks[i]);
  for (auto& run : train_seeds(cfg, seeds, parts, run_root, "remove-signal")) {
    auto r = signal_removal_test(*run.model, parts.test, tracks, cfg.predict_path);
    const auto s = std::to_string(run.seed);
    rep.rows.push_back(metric_row(rep.protocol, "intact", s, run.checkpoint, r.intact));
    rep.rows.push_back(metric_row(rep.protocol, removed, s, run.checkpoint, r.removed));
    ReportRow d{rep.protocol, "degradation", s, run.checkpoint};
    d.mse = r.delta.mse, d.mae = r.delta.mae, d.pearson = r.delta.pearson;
    rep.rows.push_back(d);
  }
  add_seed_summary(rep, "intact");
  add_seed_summary(rep, removed);
  add_seed_summary(rep, "degradation");
  return rep;
}

/// Shortened-input rows per seed and length.
inline AblationReport shorten_report(const training::TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                     const data::SplitResult& parts, const std::vector<Eigen::Index>& lengths,
                                     const std::string& run_root = "") {
  AblationReport rep{"shorten", cfg.hash(), seeds, {}};
  for (auto& run : train_seeds(cfg, seeds, parts, run_root, "shorten"))
    for (const auto& row : shortened_input_test(*run.model, parts.test, lengths, cfg.predict_path))
      rep.rows.push_back(
          metric_row(rep.protocol, std::to_string(row.length), std::to_string(run.seed), run.checkpoint, row.metrics));
  for (auto len : lengths) add_seed_summary(rep, std::to_string(len));
  return rep;
}

struct SweepEntry {
  std::string label;  // e.g. "n=2"
  training::TrainConfig config;
};

/// Train and test every entry over the seed list. A failed run becomes a row
/// with its error in the status column and the sweep moves on.
inline AblationReport sweep(const std::string& protocol, const std::vector<SweepEntry>& grid,
                            const std::vector<std::uint64_t>& seeds, const data::SplitResult& parts,
                            const std::string& run_root = "") {
  PRISM_REQUIRE(!grid.empty(), "sweep: empty grid");
  std::string hashes;
  for (const auto& e : grid) hashes += e.config.hash();
  AblationReport rep{protocol, binio::hex64(binio::fnv1a(hashes)), seeds, {}};
  for (const auto& e : grid) {
    std::vector<std::string> errors;
    std::vector<TrainedRun> runs;
    try {
      e.config.validate();
      runs = train_seeds(e.config, seeds, parts, run_root, e.label, &errors);
    } catch (const std::exception& ex) {
      for (auto seed : seeds) {
        ReportRow r{protocol, e.label, std::to_string(seed), "-"};
        r.status = std::string("failed: ") + ex.what();
        rep.rows.push_back(r);
      }
      add_seed_summary(rep, e.label);
      continue;
    }
    std::size_t err = 0;
    for (auto& run : runs) {
      if (!run.model) {
        ReportRow r{protocol, e.label, std::to_string(run.seed), "-"};
        r.status = "failed: " + errors.at(err++);
        rep.rows.push_back(r);
        continue;
      }
      rep.rows.push_back(metric_row(protocol, e.label, std::to_string(run.seed), run.checkpoint,
                                    evaluate(*run.model, parts.test, e.config.predict_path)));
    }
    add_seed_summary(rep, e.label);
  }
  return rep;
}

/// Grid over one hyperparameter, keeping everything else from `base`.
inline std::vector<SweepEntry> grid_over(const training::TrainConfig& base, const std::string& key,
                                         const std::vector<std::string>& values) {
  std::vector<SweepEntry> out;
  for (const auto& v : values) {
    auto c = base;
    c.set(key, v);
    out.push_back({key + "=" + v, c});
  }
  return out;
}

inline const std::vector<std::string> kAlphaGrid{"0.1", "1", "10"};
inline const std::vector<std::string> kBetaGrid{"0.1", "1", "10"};
inline const std::vector<std::string> kStatesGrid{"0", "1", "2"};
inline const std::vector<double> kDropoutRates{0.9, 0.7, 0.5};

/// Baseline models trained with random signal retention at each rate, next to
/// the learned-weight model `prism` (n > 0) with its measured retention.
inline AblationReport dropout_baseline(const training::TrainConfig& prism, const std::vector<double>& rates,
                                       const std::vector<std::uint64_t>& seeds, const data::SplitResult& parts,
                                       const std::string& run_root = "") {
  for (double r : rates) PRISM_REQUIRE(r > 0.0 && r <= 1.0, "dropout: rate must lie in (0, 1]");
  std::vector<SweepEntry> grid;
  for (double r : rates) {
    auto c = prism;
    c.model.states = 0;
    c.loss.alpha = 0.0;
    c.loss.beta = 0.0;
    c.signal_retention = r;
    grid.push_back({"dropout=" + data::format_double(r), c});
  }
  auto rep = sweep("dropout", grid, seeds, parts, run_root);
#ifndef PRISM_NO_INTERVENTION
  if (prism.model.states > 0) {
    for (auto& run : train_seeds(prism, seeds, parts, run_root, "learned")) {
      auto row = metric_row("dropout", "learned", std::to_string(run.seed), run.checkpoint,
                            evaluate(*run.model, parts.test, prism.predict_path));
      row.retention = retention_rate(*run.model, parts.test).mean;
      rep.rows.push_back(row);
    }
    add_seed_summary(rep, "learned");
  }
#endif
  return rep;
}

}  // namespace prism::eval
