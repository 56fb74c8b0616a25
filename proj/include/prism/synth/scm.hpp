#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prism/data/dataset_io.hpp"
#include "prism/data/record.hpp"
#include "prism/errors.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::synth {

/// Structural causal model behind the synthetic datasets:
///
///   C ~ Uniform{0..states-1}                latent background chromatin state
///   background tracks <- C                  state profile times multiplicative noise
///   foreground tracks  independent of C     1-3 Gaussian bumps
///   Y = w * mass(foreground) + gamma * effect(C) + N(0, sigma)
struct ScmConfig {
  std::int64_t genes = 2000;
  std::int64_t L = 512;
  std::int64_t d = 3;
  std::vector<std::int64_t> foreground_tracks{0};
  std::vector<std::int64_t> background_tracks{1, 2};
  double gamma = 1.0;   // confound strength
  double w = 1.0;       // causal strength of the foreground peak mass
  double sigma = 0.3;   // outcome noise
  std::int64_t states = 4;
  std::uint64_t seed = 7;
  std::int64_t aux = 0;  // nuisance auxiliary features, independent of everything
  bool normalize = true;  // divide each track by its 99th percentile

  void validate() const {
    PRISM_REQUIRE(genes >= 1, "scm: need at least one gene");
    PRISM_REQUIRE(L >= 2 && L % 2 == 0, "scm: window length must be even and positive");
    PRISM_REQUIRE(d >= 1, "scm: need at least one track");
    PRISM_REQUIRE(states >= 1, "scm: need at least one latent state");
    PRISM_REQUIRE(gamma >= 0.0, "scm: gamma must be non-negative");
    PRISM_REQUIRE(sigma >= 0.0, "scm: noise sd must be non-negative");
    PRISM_REQUIRE(aux >= 0, "scm: aux count must be non-negative");
    std::set<std::int64_t> seen;
    for (auto t : foreground_tracks) {
      PRISM_REQUIRE(t >= 0 && t < d, "scm: foreground track index out of range");
      PRISM_REQUIRE(seen.insert(t).second, "scm: track listed twice");
    }
    for (auto t : background_tracks) {
      PRISM_REQUIRE(t >= 0 && t < d, "scm: background track index out of range");
      PRISM_REQUIRE(seen.insert(t).second, "scm: track listed as both foreground and background");
    }
    PRISM_REQUIRE(static_cast<std::int64_t>(seen.size()) == d,
                  "scm: foreground and background tracks must cover every track");
  }
};

/// Per-gene latent quantities kept alongside the dataset.
struct GroundTruth {
  std::vector<std::string> gene_id;
  std::vector<std::int64_t> state;
  std::vector<double> peak_mass;  // noiseless foreground mass, in units of 100 bp at unit height
  std::vector<double> causal_y;   // w * peak_mass
  std::vector<double> effect;     // effect(C) per state
};

struct SyntheticData {
  data::Dataset dataset;
  GroundTruth truth;
};

namespace detail {

inline constexpr double kWidthMin = 50.0;   // bump full width at half maximum, bp
inline constexpr double kWidthMax = 200.0;
inline constexpr double kMassUnit = 100.0;

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

/// White noise smoothed by three passes of a centred box filter (a cubic
/// B-spline kernel), scaled to unit standard deviation.
inline std::vector<double> smooth_curve(std::int64_t L, std::int64_t box, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(L));
  for (auto& v : x) v = n01(rng);
  std::vector<double> y(x.size());
  const std::int64_t half = box / 2;
  for (int pass = 0; pass < 3; ++pass) {
    for (std::int64_t i = 0; i < L; ++i) {
      double s = 0.0;
      std::int64_t c = 0;
      for (std::int64_t j = std::max<std::int64_t>(0, i - half); j <= std::min<std::int64_t>(L - 1, i + half); ++j, ++c)
        s += x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = s / static_cast<double>(c);
    }
    std::swap(x, y);
  }
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(L);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(L));
  for (auto& v : x) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return x;
}

inline std::string chromosome_name(std::uint64_t draw) {
  const auto k = draw % 23;
  return k == 22 ? std::string("chrX") : "chr" + std::to_string(k + 1);
}

}  // namespace detail

/// Latent structure shared by every gene: per-state effects and background profiles.
struct ScmGlobals {
  std::vector<double> effect;                              // states
  std::vector<std::vector<std::vector<double>>> profile;   // states x background tracks x L

  static ScmGlobals draw(const ScmConfig& cfg) {
    ScmGlobals g;
    auto rng = make_rng(cfg.seed, Stream::synth_global);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::int64_t s = 0; s < cfg.states; ++s) g.effect.push_back(n01(rng));
    const std::int64_t box = std::max<std::int64_t>(3, cfg.L / 16);
    for (std::int64_t s = 0; s < cfg.states; ++s) {
      std::vector<std::vector<double>> tracks;
      for (std::size_t t = 0; t < cfg.background_tracks.size(); ++t) {
        const auto curve = detail::smooth_curve(cfg.L, box, rng);
        // Open chromatin co-occurs with expression: the level rises with effect(c).
        const double level = 0.5 + 0.8 * g.effect[static_cast<std::size_t>(s)];
        std::vector<double> p(curve.size());
        for (std::size_t i = 0; i < curve.size(); ++i) p[i] = detail::softplus(level + 0.6 * curve[i]);
        tracks.push_back(std::move(p));
      }
      g.profile.push_back(std::move(tracks));
    }
    return g;
  }
};

/// Generate one dataset. Each gene draws from its own counter-based stream, so
/// the output does not depend on generation order.
inline SyntheticData generate(const ScmConfig& cfg) {
  cfg.validate();
  const ScmGlobals g = ScmGlobals::draw(cfg);
  SyntheticData out;
  out.truth.effect = g.effect;
  auto& recs = out.dataset.records;
  recs.resize(static_cast<std::size_t>(cfg.genes));
  out.truth.gene_id.resize(recs.size());
  out.truth.state.resize(recs.size());
  out.truth.peak_mass.resize(recs.size());
  out.truth.causal_y.resize(recs.size());

  const double L = static_cast<double>(cfg.L);
  for (std::int64_t gi = 0; gi < cfg.genes; ++gi) {
    auto rng = make_rng(cfg.seed, Stream::synth_gene, static_cast<std::uint64_t>(gi));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto& r = recs[static_cast<std::size_t>(gi)];
    char id[32];
    std::snprintf(id, sizeof id, "SYN%06lld", static_cast<long long>(gi));
    r.gene_id = id;
    r.chromosome = detail::chromosome_name(rng());
    r.tss = 10000 + static_cast<std::int64_t>(rng() % 100000000);
    const auto state = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(cfg.states));

    std::string bases(static_cast<std::size_t>(cfg.L), 'N');
    for (auto& b : bases) b = data::kBaseOrder[rng() % 4];
    r.X = data::encode_sequence(bases);
    r.S = Matrix<float>::Zero(cfg.L, cfg.d);

    // Foreground: bumps at random positions, independent of the state.
    const int bumps = 1 + static_cast<int>(rng() % 3);
    std::vector<double> fg(static_cast<std::size_t>(cfg.L), 0.0);
    double mass = 0.0;
    for (int k = 0; k < bumps; ++k) {
      const double width = detail::kWidthMin + (detail::kWidthMax - detail::kWidthMin) * u01(rng);
      const double sd = width / 2.354820045;
      const double centre = width + (L - 2.0 * width) * u01(rng);
      const double amp = 0.5 + u01(rng);
      for (std::int64_t i = 0; i < cfg.L; ++i) {
        const double z = (static_cast<double>(i) - centre) / sd;
        const double v = amp * std::exp(-0.5 * z * z);
        fg[static_cast<std::size_t>(i)] += v;
        mass += v;
      }
    }
    mass /= detail::kMassUnit;
    for (auto t : cfg.foreground_tracks)
      for (std::int64_t i = 0; i < cfg.L; ++i)
        r.S(i, t) = static_cast<float>(std::max(0.0, fg[static_cast<std::size_t>(i)] + 0.05 * n01(rng)));

    // Background: the state's shared profile, a per-gene gain and per-position noise.
    for (std::size_t bt = 0; bt < cfg.background_tracks.size(); ++bt) {
      const auto& prof = g.profile[static_cast<std::size_t>(state)][bt];
      const double gain = std::exp(0.2 * n01(rng));
      for (std::int64_t i = 0; i < cfg.L; ++i)
        r.S(i, cfg.background_tracks[bt]) =
            static_cast<float>(prof[static_cast<std::size_t>(i)] * gain * std::exp(0.25 * n01(rng)));
    }

    const double causal = cfg.w * mass;
    const double y = causal + cfg.gamma * g.effect[static_cast<std::size_t>(state)] + cfg.sigma * n01(rng);
    r.y = static_cast<float>(y);
    for (std::int64_t j = 0; j < cfg.aux; ++j) r.aux.push_back(static_cast<float>(n01(rng)));

    out.truth.gene_id[static_cast<std::size_t>(gi)] = r.gene_id;
    out.truth.state[static_cast<std::size_t>(gi)] = state;
    out.truth.peak_mass[static_cast<std::size_t>(gi)] = mass;
    out.truth.causal_y[static_cast<std::size_t>(gi)] = causal;
  }

  auto& meta = out.dataset.meta;
  meta.target_transform = "identity";
  if (cfg.normalize) {
    meta.signal_normalization = "p99";
    meta.signal_scales = data::normalize_signals(recs);
  } else {
    meta.signal_normalization = "none";
    meta.signal_scales.assign(static_cast<std::size_t>(cfg.d), 1.0f);
  }
  meta.track_names.resize(static_cast<std::size_t>(cfg.d));
  for (auto t : cfg.foreground_tracks) meta.track_names[static_cast<std::size_t>(t)] = "fg" + std::to_string(t);
  for (auto t : cfg.background_tracks) meta.track_names[static_cast<std::size_t>(t)] = "bg" + std::to_string(t);
  for (std::int64_t j = 0; j < cfg.aux; ++j) meta.aux_names.push_back("aux" + std::to_string(j));
  return out;
}

/// Copy of `records` with the listed signal tracks set to zero.
inline std::vector<data::GeneRecord> remove_tracks(std::vector<data::GeneRecord> records,
                                                   const std::vector<std::int64_t>& indices) {
  for (auto& r : records)
    for (auto t : indices) {
      PRISM_REQUIRE(t >= 0 && t < r.tracks(), "remove_tracks: track index " + std::to_string(t) + " out of range [0, " +
                                                  std::to_string(r.tracks()) + ")");
      r.S.col(t).setZero();
    }
  return records;
}

inline void write_ground_truth(const GroundTruth& gt, const std::string& path) {
  std::ostringstream s;
  s << "gene_id\tstate\tcausal_y\n";
  for (std::size_t i = 0; i < gt.gene_id.size(); ++i)
    s << gt.gene_id[i] << '\t' << gt.state[i] << '\t' << data::format_double(gt.causal_y[i]) << '\n';
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << s.str();
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Write the dataset files plus ground_truth.tsv; returns the manifest path.
inline std::string save_synthetic(const SyntheticData& sd, const std::string& dir) {
  const auto manifest = data::save_dataset(sd.dataset, dir);
  write_ground_truth(sd.truth, (std::filesystem::path(dir) / "ground_truth.tsv").string());
  return manifest;
}

}  // namespace prism::synth
