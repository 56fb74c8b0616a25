#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "prism/data/dataset_io.hpp"
#include "prism/errors.hpp"
#include "prism/eval/predict.hpp"
#include "prism/intervention/losses.hpp"
#include "prism/model/prism_model.hpp"
#include "prism/numerics/optim.hpp"

namespace prism::training {

inline const std::vector<std::uint64_t> kDefaultSeeds{2, 22, 222, 2222, 22222};

struct TrainConfig {
  model::ModelConfig model;
  intervention::LossConfig loss;
  std::int64_t batch_size = 8;
  std::int64_t max_steps = 50000;
  LrSchedule schedule;  // total_steps follows max_steps
  std::int64_t eval_every = 500;
  std::uint64_t seed = 2;
  double signal_retention = 1.0;  // < 1 trains with per-entry signal dropout
  eval::PredictPath predict_path = eval::PredictPath::automatic;

  /// Reduced configuration for CI and the acceptance suite: d' = 32 and a
  /// schedule compressed to `steps` with a 10% warmup. The peak rate is
  /// doubled to make up for the short run; start and floor rates are unchanged.
  static TrainConfig desk(std::int64_t steps = 3000) {
    TrainConfig c;
    c.model.hidden = 32;
    c.max_steps = steps;
    c.schedule.peak = 1e-3;
    c.schedule.total_steps = steps;
    c.schedule.warmup_steps = std::max<std::int64_t>(1, steps / 10);
    c.eval_every = std::min<std::int64_t>(500, steps);
    return c;
  }

  void validate() const {
    model.validate();
    loss.validate();
    schedule.validate();
    PRISM_REQUIRE(batch_size >= 1, "train: batch_size must be positive");
    PRISM_REQUIRE(max_steps >= 1, "train: max_steps must be positive");
    PRISM_REQUIRE(schedule.total_steps == max_steps, "train: schedule total_steps must equal max_steps");
    PRISM_REQUIRE(eval_every >= 1, "train: eval_every must be positive");
    PRISM_REQUIRE(signal_retention > 0.0 && signal_retention <= 1.0, "train: signal_retention must lie in (0, 1]");
    if (model.states == 0)
      PRISM_REQUIRE(predict_path != eval::PredictPath::interventional,
                    "train: interventional prediction needs n > 0");
  }

  /// Ordered key/value view; the same keys are accepted by from_pairs.
  std::vector<std::pair<std::string, std::string>> pairs() const {
    using data::format_double;
    return {
        {"n", std::to_string(model.states)},
        {"alpha", format_double(loss.alpha)},
        {"beta", format_double(loss.beta)},
        {"t", format_double(loss.t)},
        {"delta", format_double(loss.delta)},
        {"hidden", std::to_string(model.hidden)},
        {"tracks", std::to_string(model.tracks)},
        {"aux", std::to_string(model.aux)},
        {"backbone", model.backbone},
        {"backbone_layers", std::to_string(model.backbone_layers)},
        {"backbone_kernel", std::to_string(model.backbone_kernel)},
        {"batch_size", std::to_string(batch_size)},
        {"max_steps", std::to_string(max_steps)},
        {"warmup_start", format_double(schedule.warmup_start)},
        {"peak_lr", format_double(schedule.peak)},
        {"min_lr", format_double(schedule.floor)},
        {"warmup_steps", std::to_string(schedule.warmup_steps)},
        {"eval_every", std::to_string(eval_every)},
        {"seed", std::to_string(seed)},
        {"signal_retention", format_double(signal_retention)},
        {"predict_path", eval::path_name(predict_path)},
    };
  }

  /// Apply one key. Unknown keys and malformed values are contract violations
  /// naming the key.
  void set(const std::string& key, const std::string& value) {
    auto num = [&](double& out) {
      if (!data::parse_double(value, out)) throw ContractViolation("config: bad value '" + value + "' for " + key);
    };
    auto integer = [&](auto& out) {
      std::int64_t v = 0;
      if (!data::parse_int(value, v)) throw ContractViolation("config: bad value '" + value + "' for " + key);
      out = static_cast<std::remove_reference_t<decltype(out)>>(v);
      if (v < 0 && !std::is_signed_v<std::remove_reference_t<decltype(out)>>)
        throw ContractViolation("config: " + key + " must be non-negative");
    };
    if (key == "n") integer(model.states);
    else if (key == "alpha") num(loss.alpha);
    else if (key == "beta") num(loss.beta);
    else if (key == "t") num(loss.t);
    else if (key == "delta") num(loss.delta);
    else if (key == "hidden") integer(model.hidden);
    else if (key == "tracks") integer(model.tracks);
    else if (key == "aux") integer(model.aux);
    else if (key == "backbone") model.backbone = value;
    else if (key == "backbone_layers") integer(model.backbone_layers);
    else if (key == "backbone_kernel") integer(model.backbone_kernel);
    else if (key == "batch_size") integer(batch_size);
    else if (key == "max_steps") {
      integer(max_steps);
      schedule.total_steps = max_steps;
    } else if (key == "warmup_start") num(schedule.warmup_start);
    else if (key == "peak_lr") num(schedule.peak);
    else if (key == "min_lr") num(schedule.floor);
    else if (key == "warmup_steps") integer(schedule.warmup_steps);
    else if (key == "eval_every") integer(eval_every);
    else if (key == "seed") integer(seed);
    else if (key == "signal_retention") num(signal_retention);
    else if (key == "predict_path") predict_path = eval::parse_path(value);
    else throw ContractViolation("config: unknown key '" + key + "'");
  }

  std::string to_tsv() const {
    std::ostringstream s;
    for (const auto& [k, v] : pairs()) s << k << '\t' << v << '\n';
    return s.str();
  }

  /// Keys missing from the text keep their current values.
  void apply_tsv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      auto fields = data::split_tabs(line);
      if (fields.size() != 2) throw ContractViolation("config: expected 'key<TAB>value', got '" + line + "'");
      set(fields[0], fields[1]);
    }
  }

  std::string hash() const { return binio::hex64(binio::fnv1a(to_tsv())); }
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace prism::training
