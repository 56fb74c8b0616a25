#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "prism/data/dataset_io.hpp"
#include "prism/errors.hpp"
#include "prism/eval/metrics.hpp"
#include "prism/eval/predict.hpp"
#include "prism/model/prism_model.hpp"
#include "prism/synth/scm.hpp"

namespace prism::eval {

/// Degradation after a perturbation: positive means worse for every field.
struct Degradation {
  double mse = 0.0;      // perturbed - intact
  double mae = 0.0;      // perturbed - intact
  double pearson = 0.0;  // intact - perturbed
};

inline Degradation degradation(const MetricTriple& intact, const MetricTriple& perturbed) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {perturbed.mse - intact.mse, perturbed.mae - intact.mae,
          intact.pearson && perturbed.pearson ? *intact.pearson - *perturbed.pearson : nan};
}

struct RemovalResult {
  std::vector<std::int64_t> tracks;
  MetricTriple intact;
  MetricTriple removed;
  Degradation delta;
};

/// Evaluate with the listed signal tracks zeroed at test time.
template <typename T>
RemovalResult signal_removal_test(model::PrismModel<T>& m, const std::vector<data::GeneRecord>& records,
                                  const std::vector<std::int64_t>& tracks, PredictPath path = PredictPath::automatic) {
  RemovalResult r;
  r.tracks = tracks;
  r.intact = evaluate(m, records, path);
  r.removed = tracks.empty() ? r.intact : evaluate(m, synth::remove_tracks(records, tracks), path);
  r.delta = degradation(r.intact, r.removed);
  return r;
}

inline constexpr Eigen::Index kMinEvalLength = 64;

/// Central `length` positions of X and S; aux, target and metadata unchanged.
inline std::vector<data::GeneRecord> center_crop(const std::vector<data::GeneRecord>& records, Eigen::Index length) {
  PRISM_REQUIRE(length >= kMinEvalLength, "shortened input: length " + std::to_string(length) +
                                              " is below the confounder-encoder minimum of " +
                                              std::to_string(kMinEvalLength));
  std::vector<data::GeneRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    PRISM_REQUIRE(length <= r.length(), "shortened input: length " + std::to_string(length) +
                                            " exceeds the window of " + r.gene_id);
    data::GeneRecord c = r;
    const Eigen::Index start = (r.length() - length) / 2;
    c.X = r.X.middleRows(start, length);
    c.S = r.S.middleRows(start, length);
    out.push_back(std::move(c));
  }
  return out;
}

struct LengthResult {
  Eigen::Index length = 0;
  MetricTriple metrics;
};

/// One row per requested length, in the order given.
template <typename T>
std::vector<LengthResult> shortened_input_test(model::PrismModel<T>& m, const std::vector<data::GeneRecord>& records,
                                               const std::vector<Eigen::Index>& lengths,
                                               PredictPath path = PredictPath::automatic) {
  PRISM_REQUIRE(!records.empty(), "shortened input: empty dataset");
  for (auto len : lengths) {
    PRISM_REQUIRE(len >= kMinEvalLength, "shortened input: length " + std::to_string(len) +
                                             " is below the confounder-encoder minimum of " +
                                             std::to_string(kMinEvalLength));
  }
  std::vector<LengthResult> out;
  for (auto len : lengths) {
    const bool full = len == records.front().length();
    out.push_back({len, full ? evaluate(m, records, path) : evaluate(m, center_crop(records, len), path)});
  }
  return out;
}

#ifndef PRISM_NO_INTERVENTION

/// Confounder weights for every record, row i = gene i, columns n * d'.
template <typename T>
Matrix<T> weights_of(model::PrismModel<T>& m, const std::vector<data::GeneRecord>& records) {
  PRISM_REQUIRE(!records.empty(), "confounder weights: empty dataset");
  const auto cols = m.config().states * m.config().hidden;
  Matrix<T> A(static_cast<Eigen::Index>(records.size()), cols);
  for (std::size_t lo = 0; lo < records.size(); lo += kEvalChunk) {
    const std::size_t hi = std::min(records.size(), lo + kEvalChunk);
    std::vector<std::size_t> idx;
    for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
    A.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)) =
        m.confounder_weight_values(model::make_batch<T>(records, idx));
  }
  return A;
}

struct Retention {
  double mean = 0.0;
  std::vector<double> per_state;
};

/// Mean of all confounder-weight entries, overall and per state.
template <typename T>
Retention retention_rate(model::PrismModel<T>& m, const std::vector<data::GeneRecord>& records) {
  const auto A = weights_of(m, records);
  const auto H = m.config().hidden;
  Retention r;
  r.mean = A.template cast<double>().mean();
  for (Eigen::Index i = 0; i < m.config().states; ++i)
    r.per_state.push_back(A.middleCols(i * H, H).template cast<double>().mean());
  return r;
}

/// Per gene, the mean cosine similarity over state pairs i < j.
template <typename T>
std::vector<double> weight_cosines(model::PrismModel<T>& m, const std::vector<data::GeneRecord>& records) {
  const auto n = m.config().states;
  PRISM_REQUIRE(n >= 2, "weight cosines need at least two states");
  const auto A = weights_of(m, records).template cast<double>().eval();
  const auto H = m.config().hidden;
  std::vector<double> out;
  for (Eigen::Index g = 0; g < A.rows(); ++g) {
    double sum = 0.0;
    int pairs = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const auto a = A.row(g).segment(i * H, H);
        const auto b = A.row(g).segment(j * H, H);
        sum += a.dot(b) / (a.norm() * b.norm());
        ++pairs;
      }
    out.push_back(sum / pairs);
  }
  return out;
}

/// TSV rows: gene_id, state, then d' weight values. Genes in record order,
/// states ascending.
template <typename T>
void export_weights(model::PrismModel<T>& m, const std::vector<data::GeneRecord>& records, const std::string& path) {
  const auto A = weights_of(m, records);
  const auto H = m.config().hidden;
  std::ostringstream s;
  s << "gene_id\tstate";
  for (Eigen::Index k = 0; k < H; ++k) s << "\tw" << k;
  s << '\n';
  for (std::size_t g = 0; g < records.size(); ++g)
    for (Eigen::Index i = 0; i < m.config().states; ++i) {
      s << records[g].gene_id << '\t' << i;
      for (Eigen::Index k = 0; k < H; ++k)
        s << '\t' << data::format_float(static_cast<float>(A(static_cast<Eigen::Index>(g), i * H + k)));
      s << '\n';
    }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << s.str();
  if (!out) throw std::runtime_error("write failed: " + path);
}

#endif  // PRISM_NO_INTERVENTION

inline double median(std::vector<double> v) {
  PRISM_REQUIRE(!v.empty(), "median of an empty list");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace prism::eval
