#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "prism/data/dataset_io.hpp"
#include "prism/data/split.hpp"
#include "prism/errors.hpp"
#include "prism/eval/experiments.hpp"
#include "prism/eval/protocols.hpp"
#include "prism/model/prism_model.hpp"
#include "prism/numerics/binio.hpp"
#include "prism/synth/scm.hpp"
#include "prism/training/config.hpp"
#include "prism/training/trainer.hpp"

namespace prism::cli {

namespace fs = std::filesystem;

inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kRuntime = 2;

/// Bad flag combination or value found after parsing; exits with kUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exclusive ownership of an output directory for the lifetime of a command.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_((fs::path(dir) / ".prism.lock").string()) {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw std::runtime_error("output directory " + dir + " is locked by another run (" + path_ + ")");
    const auto pid = std::to_string(::getpid()) + "\n";
    if (::write(fd_, pid.data(), pid.size()) < 0) {
      // The lock itself is the file; its content is informational.
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;
  ~DirLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  std::string path_;
  int fd_ = -1;
};

inline std::vector<std::string> values_of(const CLI::Option* o) {
  if (o->count() > 0) return o->results();
  std::vector<std::string> out;
  std::stringstream s(o->get_default_str());
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(item);
  return out;
}

inline std::string value_of(const CLI::Option* o) {
  if (o->count() == 0) return o->get_default_str();
  std::string joined;
  for (const auto& v : o->results()) joined += (joined.empty() ? "" : ",") + v;
  return joined;
}

template <typename T>
std::vector<T> list_of(const CLI::Option* o) {
  std::vector<T> out;
  for (const auto& v : values_of(o)) {
    T x{};
    if (!CLI::detail::lexical_cast(v, x)) throw UsageError(o->get_name() + ": cannot parse '" + v + "'");
    out.push_back(x);
  }
  return out;
}

/// Every option of a subcommand with its resolved value.
inline std::string resolved_options(const CLI::App* sub) {
  std::ostringstream s;
  s << "# command " << sub->get_name() << '\n';
  for (const auto* o : sub->get_options()) {
    if (o->get_name() == "--help") continue;
    s << o->get_name() << '\t' << value_of(o) << '\n';
  }
  return s.str();
}

/// Flags that map one-to-one onto TrainConfig keys.
struct TrainFlags {
  std::vector<std::pair<CLI::Option*, std::string>> keys;
  CLI::Option* config = nullptr;
  CLI::Option* profile = nullptr;
  CLI::Option* desk_steps = nullptr;

  void add(CLI::App* sub) {
    const training::TrainConfig defaults;
    auto add_key = [&](const std::string& key, const std::string& help, const CLI::Validator& check) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      std::string def;
      for (const auto& [k, v] : defaults.pairs())
        if (k == key) def = v;
      auto* o = sub->add_option(flag, help)->default_str(def)->check(check);
      keys.emplace_back(o, key);
    };
    const auto nonneg_int = CLI::TypeValidator<std::int64_t>() & CLI::NonNegativeNumber;
    const auto pos_int = CLI::TypeValidator<std::int64_t>() & CLI::PositiveNumber;
    add_key("n", "number of confounder states (0 = baseline)", nonneg_int);
    add_key("alpha", "weight of the interventional loss", CLI::NonNegativeNumber);
    add_key("beta", "weight of the uniform loss", CLI::NonNegativeNumber);
    add_key("t", "uniform-loss temperature", CLI::PositiveNumber);
    add_key("delta", "Huber threshold", CLI::PositiveNumber);
    add_key("hidden", "encoded feature width d'", pos_int);
    add_key("backbone", "predictor backbone", CLI::IsMember({"gated-conv"}));
    add_key("backbone_layers", "backbone blocks", pos_int);
    add_key("backbone_kernel", "backbone convolution width", pos_int);
    add_key("batch_size", "examples per step", pos_int);
    add_key("max_steps", "optimizer steps", pos_int);
    add_key("warmup_start", "learning rate at step 0", CLI::NonNegativeNumber);
    add_key("peak_lr", "learning rate at the end of warmup", CLI::PositiveNumber);
    add_key("min_lr", "learning rate at the last step", CLI::NonNegativeNumber);
    add_key("warmup_steps", "linear warmup length", pos_int);
    add_key("eval_every", "steps between validation passes", pos_int);
    add_key("seed", "initialization and shuffling seed", CLI::TypeValidator<std::uint64_t>());
    add_key("signal_retention", "keep probability for random signal dropout (1 = off)", CLI::Range(0.0, 1.0));
    add_key("predict_path", "reported prediction", CLI::IsMember({"auto", "standard", "interventional"}));
    config = sub->add_option("--config", "TSV written to a run directory; flags given here override it")
                 ->check(CLI::ExistingFile);
    profile = sub->add_option("--profile", "full-scale defaults or the reduced desk profile")
                  ->default_str("full")
                  ->check(CLI::IsMember({"full", "desk"}));
    desk_steps = sub->add_option("--desk-steps", "step budget of the desk profile")->default_str("3000")->check(pos_int);
  }

  /// Profile, then --config, then explicit flags. A --max-steps below the
  /// warmup length, without --warmup-steps, resets warmup to 10% of the steps.
  /// Tracks and aux follow the dataset.
  training::TrainConfig resolve(const data::Dataset* ds) const {
    training::TrainConfig c;
    if (value_of(profile) == "desk") c = training::TrainConfig::desk(std::stoll(value_of(desk_steps)));
    if (config->count() > 0) c.apply_tsv(data::read_text_file(config->as<std::string>()));
    bool warmup_given = false;
    for (const auto& [opt, key] : keys)
      if (opt->count() > 0) {
        c.set(key, opt->as<std::string>());
        warmup_given = warmup_given || key == "warmup_steps";
      }
    if (!warmup_given && c.schedule.warmup_steps >= c.max_steps)
      c.schedule.warmup_steps = std::max<std::int64_t>(1, c.max_steps / 10);
    if (ds != nullptr && !ds->records.empty()) {
      c.model.tracks = ds->records.front().tracks();
      c.model.aux = static_cast<Eigen::Index>(ds->records.front().aux.size());
    }
    try {
      c.validate();
      model::make_backbone<float>(c.model.backbone, c.model.hidden, c.model.backbone_layers, c.model.backbone_kernel);
    } catch (const ContractViolation& e) {
      throw UsageError(std::string("invalid configuration: ") + e.what());
    }
    return c;
  }
};

struct SplitFlags {
  CLI::Option* validation = nullptr;
  CLI::Option* test = nullptr;

  void add(CLI::App* sub) {
    validation = sub->add_option("--validation-chromosomes", "held-out chromosomes for model selection")
                     ->delimiter(',')->expected(1, CLI::detail::expected_max_vector_size)
                     ->default_str("3,21");
    test = sub->add_option("--test-chromosomes", "held-out chromosomes for testing")->delimiter(',')->expected(1, CLI::detail::expected_max_vector_size)->default_str("22,X");
  }

  data::SplitSpec spec() const {
    data::SplitSpec s;
    s.validation_chromosomes.clear();
    s.test_chromosomes.clear();
    for (const auto& c : values_of(validation)) s.validation_chromosomes.insert(c);
    for (const auto& c : values_of(test)) s.test_chromosomes.insert(c);
    try {
      s.validate();
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
    return s;
  }
};

inline const std::vector<data::GeneRecord>& part_of(const data::SplitResult& parts, const std::string& name,
                                                   std::vector<data::GeneRecord>& all) {
  if (name == "train") return parts.train;
  if (name == "validation") return parts.validation;
  if (name == "test") return parts.test;
  all = parts.train;
  all.insert(all.end(), parts.validation.begin(), parts.validation.end());
  all.insert(all.end(), parts.test.begin(), parts.test.end());
  return all;
}

inline std::string checkpoint_file(const std::string& run, const std::string& which) {
  if (which == "best" || which == "final") return (fs::path(run) / (which + ".prck")).string();
  return which;
}

inline std::string seeds_text(const std::vector<std::uint64_t>& seeds) { return eval::join_seeds(seeds); }

/// Parse argv and run one command. Output goes to `out`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Confounder-aware expression prediction: data generation, training, evaluation and stress tests",
               "prism"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "help for every command");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset with a known confounder");
  synth::ScmConfig scm;
  std::string gen_out;
  std::string gen_fg = "0", gen_bg = "1,2";
  gen->add_option("--genes", scm.genes, "number of genes")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--length", scm.L, "window length L (even)")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--tracks", scm.d, "signal tracks d")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--foreground", gen_fg, "foreground track indices")->capture_default_str();
  gen->add_option("--background", gen_bg, "background track indices")->capture_default_str();
  gen->add_option("--gamma", scm.gamma, "confound strength")->capture_default_str()->check(CLI::NonNegativeNumber);
  gen->add_option("--w", scm.w, "causal strength of foreground peak mass")->capture_default_str();
  gen->add_option("--sigma", scm.sigma, "outcome noise sd")->capture_default_str()->check(CLI::NonNegativeNumber);
  gen->add_option("--states", scm.states, "latent chromatin states")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--aux", scm.aux, "auxiliary features per gene")->capture_default_str()->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", scm.seed, "generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train one model");
  TrainFlags train_flags;
  SplitFlags train_split;
  std::string train_data, train_out = "run";
  train->add_option("--data", train_data, "dataset directory or manifest")->required();
  train->add_option("--out", train_out, "run directory")->capture_default_str();
  train_flags.add(train);
  train_split.add(train);

  // eval
  auto* evalc = app.add_subcommand("eval", "evaluate a trained run");
  SplitFlags eval_split;
  std::string eval_run, eval_data, eval_ckpt = "best", eval_part = "test", eval_out;
  evalc->add_option("--run", eval_run, "run directory")->required();
  evalc->add_option("--data", eval_data, "dataset directory or manifest")->required();
  evalc->add_option("--checkpoint", eval_ckpt, "best, final, or a checkpoint path")->capture_default_str();
  evalc->add_option("--part", eval_part, "dataset part")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  evalc->add_option("--out", eval_out, "report directory (default: the run directory)");
  eval_split.add(evalc);

  // sweep
  auto* sweepc = app.add_subcommand("sweep", "train and test a grid over one hyperparameter");
  TrainFlags sweep_flags;
  SplitFlags sweep_split;
  std::string sweep_data, sweep_out = "sweep", sweep_param = "n";
  bool sweep_plot = false;
  sweepc->add_option("--data", sweep_data, "dataset directory or manifest")->required();
  sweepc->add_option("--out", sweep_out, "output directory")->capture_default_str();
  sweepc->add_option("--param", sweep_param, "swept key")
      ->capture_default_str()
      ->check(CLI::IsMember({"n", "alpha", "beta", "t", "hidden", "signal_retention"}));
  auto* sweep_values = sweepc->add_option("--values", "grid values (default: 0,1,2 for n; 0.1,1,10 otherwise)")
                           ->delimiter(',')->expected(1, CLI::detail::expected_max_vector_size);
  auto* sweep_seeds = sweepc->add_option("--seeds", "seed list")->delimiter(',')->expected(1, CLI::detail::expected_max_vector_size)->default_str("2,22,222,2222,22222");
  sweepc->add_flag("--emit-plot-data", sweep_plot, "also write x/y series for plotting");
  sweep_flags.add(sweepc);
  sweep_split.add(sweepc);

  // stress
  auto* stress = app.add_subcommand("stress", "stress protocols");
  stress->require_subcommand(1, 1);
  struct StressCommon {
    TrainFlags flags;
    SplitFlags split;
    std::string data, out = "stress", run;
    bool plot = false;
    CLI::Option* seeds = nullptr;
    void add(CLI::App* s, bool allow_run) {
      s->add_option("--data", data, "dataset directory or manifest")->required();
      s->add_option("--out", out, "output directory")->capture_default_str();
      if (allow_run) s->add_option("--run", run, "evaluate this trained run instead of training per seed");
      seeds = s->add_option("--seeds", "seed list")->delimiter(',')->expected(1, CLI::detail::expected_max_vector_size)->default_str("2,22,222,2222,22222");
      s->add_flag("--emit-plot-data", plot, "also write x/y series for plotting");
      flags.add(s);
      split.add(s);
    }
  };
  auto* remove = stress->add_subcommand("remove-signal", "zero signal tracks at test time");
  StressCommon remove_common;
  remove_common.add(remove, true);
  auto* remove_tracks = remove->add_option("--tracks", "track indices to zero")->delimiter(',')->expected(1, CLI::detail::expected_max_vector_size)->default_str("1,2");
  auto* shorten = stress->add_subcommand("shorten", "center-cropped inputs");
  StressCommon shorten_common;
  shorten_common.add(shorten, true);
  auto* shorten_lengths = shorten->add_option("--lengths", "window lengths")->delimiter(',')->expected(1, CLI::detail::expected_max_vector_size)->default_str("512,256,128");
  auto* dropout = stress->add_subcommand("dropout", "random signal dropout baselines versus learned weights");
  StressCommon dropout_common;
  dropout_common.add(dropout, false);
  auto* dropout_rates = dropout->add_option("--rates", "retention rates in (0, 1]")->delimiter(',')->expected(1, CLI::detail::expected_max_vector_size)->default_str("0.9,0.7,0.5");

  // export-weights
  auto* exportc = app.add_subcommand("export-weights", "write per-gene confounder weights");
  SplitFlags export_split;
  std::string export_run, export_data, export_ckpt = "best", export_part = "test", export_out;
  exportc->add_option("--run", export_run, "run directory")->required();
  exportc->add_option("--data", export_data, "dataset directory or manifest")->required();
  exportc->add_option("--checkpoint", export_ckpt, "best, final, or a checkpoint path")->capture_default_str();
  exportc->add_option("--part", export_part, "dataset part")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  exportc->add_option("--out", export_out, "output directory (default: the run directory)");
  export_split.add(exportc);

  // describe
  auto* describe = app.add_subcommand("describe", "parameter counts per owner");
  TrainFlags describe_flags;
  describe_flags.add(describe);
  std::int64_t describe_tracks = 3, describe_aux = 0;
  describe->add_option("--tracks", describe_tracks, "signal tracks d")->capture_default_str()->check(CLI::PositiveNumber);
  describe->add_option("--aux", describe_aux, "auxiliary features k")->capture_default_str()->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "prism: " << e.what() << '\n';
    err << "run with --help for usage\n";
    return kUsage;
  }

  auto index_list = [](const std::string& text, const char* flag) {
    std::vector<std::int64_t> out;
    std::stringstream s(text);
    std::string item;
    while (std::getline(s, item, ',')) {
      if (item.empty()) continue;
      std::int64_t v = 0;
      if (!data::parse_int(item, v)) throw UsageError(std::string(flag) + ": bad track index '" + item + "'");
      out.push_back(v);
    }
    return out;
  };
  auto load_parts = [](const std::string& path, const SplitFlags& sf, data::Dataset& ds) {
    const auto spec = sf.spec();
    ds = data::load_dataset(path);
    return data::split(ds.records, spec);
  };
  auto seeds_of = [](CLI::Option* o) {
    auto s = list_of<std::uint64_t>(o);
    if (s.size() < 2) throw UsageError("--seeds: need at least two seeds");
    return s;
  };

  try {
    if (*gen) {
      scm.foreground_tracks = index_list(gen_fg, "--foreground");
      scm.background_tracks = index_list(gen_bg, "--background");
      try {
        scm.validate();
      } catch (const ContractViolation& e) {
        throw UsageError(e.what());
      }
      DirLock lock(gen_out);
      training::write_text((fs::path(gen_out) / "gen.resolved.tsv").string(), resolved_options(gen));
      auto sd = synth::generate(scm);
      const auto manifest = synth::save_synthetic(sd, gen_out);
      out << "wrote " << sd.dataset.records.size() << " genes to " << manifest << '\n';
      return kOk;
    }

    if (*train) {
      data::Dataset ds;
      const auto spec = train_split.spec();
      ds = data::load_dataset(train_data);
      auto cfg = train_flags.resolve(&ds);
      auto parts = data::split(std::move(ds.records), spec);
      DirLock lock(train_out);
      auto st = training::train(cfg, parts.train, parts.validation, train_out);
      auto best = st.best_model();
      std::ofstream metrics(fs::path(train_out) / "metrics.tsv", std::ios::app | std::ios::binary);
      if (!parts.test.empty()) {
        auto m = eval::evaluate(*best, parts.test, cfg.predict_path);
        training::write_metrics_tsv(metrics, "best-test", m);
        out << "test mse " << m.mse << " mae " << m.mae << " pearson "
            << (m.pearson ? data::format_double(*m.pearson) : "nan") << '\n';
      }
      out << "best validation mse " << st.best_validation_mse << " at step " << st.best_step << '\n';
      return kOk;
    }

    if (*evalc) {
      const std::string dir = eval_out.empty() ? eval_run : eval_out;
      auto cfg = training::load_config((fs::path(eval_run) / "config.tsv").string());
      data::Dataset ds;
      auto parts = load_parts(eval_data, eval_split, ds);
      DirLock lock(dir);
      training::write_text((fs::path(dir) / "eval.resolved.tsv").string(), resolved_options(evalc));
      std::vector<data::GeneRecord> all;
      const auto& records = part_of(parts, eval_part, all);
      const auto file = checkpoint_file(eval_run, eval_ckpt);
      auto m = training::evaluate_checkpoint(cfg, file, records);
      eval::AblationReport rep{"eval", cfg.hash(), {cfg.seed}, {}};
      rep.rows.push_back(eval::metric_row("eval", eval_part, std::to_string(cfg.seed), binio::file_hash(file), m));
      eval::write_report(rep, (fs::path(dir) / "eval.tsv").string());
      out << eval::format_report(rep);
      return kOk;
    }

    if (*sweepc) {
      data::Dataset ds;
      auto parts = load_parts(sweep_data, sweep_split, ds);
      auto base = sweep_flags.resolve(&ds);
      auto seeds = seeds_of(sweep_seeds);
      std::vector<std::string> values =
          sweep_values->count() > 0 ? sweep_values->results()
                                    : (sweep_param == "n" ? eval::kStatesGrid : eval::kAlphaGrid);
      auto grid = eval::grid_over(base, sweep_param, values);
      DirLock lock(sweep_out);
      training::write_text((fs::path(sweep_out) / "sweep.resolved.tsv").string(), resolved_options(sweepc));
      training::write_text((fs::path(sweep_out) / "config.tsv").string(), base.to_tsv());
      auto rep = eval::sweep("sweep:" + sweep_param, grid, seeds, parts, sweep_out);
      eval::write_report(rep, (fs::path(sweep_out) / "sweep.tsv").string(), sweep_plot);
      out << eval::format_report(rep);
      return kOk;
    }

    if (*stress) {
      StressCommon* common = *remove ? &remove_common : *shorten ? &shorten_common : &dropout_common;
      CLI::App* sub = *remove ? remove : *shorten ? shorten : dropout;
      data::Dataset ds;
      auto parts = load_parts(common->data, common->split, ds);
      const bool from_run = !common->run.empty();
      auto cfg = from_run ? training::load_config((fs::path(common->run) / "config.tsv").string())
                          : common->flags.resolve(&ds);
      auto seeds = from_run ? std::vector<std::uint64_t>{cfg.seed} : seeds_of(common->seeds);
      DirLock lock(common->out);
      training::write_text((fs::path(common->out) / (sub->get_name() + ".resolved.tsv")).string(),
                           resolved_options(sub));
      training::write_text((fs::path(common->out) / "config.tsv").string(), cfg.to_tsv());
      eval::AblationReport rep;
      if (*remove) {
        auto tracks = list_of<std::int64_t>(remove_tracks);
        if (from_run) {
          auto m = training::load_model(cfg.model, checkpoint_file(common->run, "best"));
          auto r = eval::signal_removal_test(*m, parts.test, tracks, cfg.predict_path);
          const auto h = eval::checkpoint_hash(*m);
          rep = {"remove-signal", cfg.hash(), seeds, {}};
          rep.rows.push_back(eval::metric_row(rep.protocol, "intact", std::to_string(cfg.seed), h, r.intact));
          rep.rows.push_back(eval::metric_row(rep.protocol, "removed", std::to_string(cfg.seed), h, r.removed));
          eval::ReportRow d{rep.protocol, "degradation", std::to_string(cfg.seed), h};
          d.mse = r.delta.mse, d.mae = r.delta.mae, d.pearson = r.delta.pearson;
          rep.rows.push_back(d);
        } else {
          rep = eval::removal_report(cfg, seeds, parts, tracks, common->out);
        }
      } else if (*shorten) {
        std::vector<Eigen::Index> lengths;
        for (auto v : list_of<std::int64_t>(shorten_lengths)) lengths.push_back(v);
        for (auto len : lengths)
          if (len < eval::kMinEvalLength)
            throw UsageError("--lengths: " + std::to_string(len) + " is below the minimum of " +
                             std::to_string(eval::kMinEvalLength));
        if (from_run) {
          auto m = training::load_model(cfg.model, checkpoint_file(common->run, "best"));
          const auto h = eval::checkpoint_hash(*m);
          rep = {"shorten", cfg.hash(), seeds, {}};
          for (const auto& row : eval::shortened_input_test(*m, parts.test, lengths, cfg.predict_path))
            rep.rows.push_back(
                eval::metric_row(rep.protocol, std::to_string(row.length), std::to_string(cfg.seed), h, row.metrics));
        } else {
          rep = eval::shorten_report(cfg, seeds, parts, lengths, common->out);
        }
      } else {
        auto rates = list_of<double>(dropout_rates);
        for (double r : rates)
          if (!(r > 0.0 && r <= 1.0)) throw UsageError("--rates: " + data::format_double(r) + " is outside (0, 1]");
        rep = eval::dropout_baseline(cfg, rates, seeds, parts, common->out);
      }
      eval::write_report(rep, (fs::path(common->out) / (sub->get_name() + ".tsv")).string(), common->plot);
      out << eval::format_report(rep);
      return kOk;
    }

    if (*exportc) {
      const std::string dir = export_out.empty() ? export_run : export_out;
      auto cfg = training::load_config((fs::path(export_run) / "config.tsv").string());
      if (cfg.model.states == 0) throw UsageError("export-weights: the run has no confounder encoder (n = 0)");
      data::Dataset ds;
      auto parts = load_parts(export_data, export_split, ds);
      DirLock lock(dir);
      training::write_text((fs::path(dir) / "export-weights.resolved.tsv").string(), resolved_options(exportc));
      std::vector<data::GeneRecord> all;
      const auto& records = part_of(parts, export_part, all);
      PRISM_REQUIRE(!records.empty(), "export-weights: no genes in part " + export_part);
      auto m = training::load_model(cfg.model, checkpoint_file(export_run, export_ckpt));
      const auto path = (fs::path(dir) / "weights.tsv").string();
      eval::export_weights(*m, records, path);
      out << "wrote " << records.size() * static_cast<std::size_t>(cfg.model.states) << " rows to " << path << '\n';
      return kOk;
    }

    if (*describe) {
      auto cfg = describe_flags.resolve(nullptr);
      cfg.model.tracks = describe_tracks;
      cfg.model.aux = describe_aux;
      model::PrismModel<float> m(cfg.model);
      auto c = model::count_by_owner(m);
      out << "owner\tparameters\n";
      out << "theta\t" << c.theta << '\n';
      out << "omega\t" << c.omega << '\n';
      out << "phi\t" << c.phi << '\n';
      out << "total\t" << c.total() << '\n';
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "prism: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "prism: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace prism::cli
