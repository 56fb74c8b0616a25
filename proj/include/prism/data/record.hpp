#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "prism/errors.hpp"
#include "prism/numerics/tensor.hpp"

namespace prism::data {

/// One gene: a TSS-centred window of sequence and signal tracks plus its target.
struct GeneRecord {
  std::string gene_id;
  std::string chromosome;
  std::int64_t tss = 0;
  Matrix<float> X;  // L x 4 one-hot, channel order A,T,C,G; unknown bases are zero rows
  Matrix<float> S;  // L x d, non-negative
  float y = 0.0f;   // expression target (already transformed)
  std::vector<float> aux;

  Eigen::Index length() const { return X.rows(); }
  Eigen::Index tracks() const { return S.cols(); }
};

inline constexpr std::string_view kBaseOrder = "ATCG";

inline int base_channel(char c) {
  switch (c) {
    case 'A': case 'a': return 0;
    case 'T': case 't': return 1;
    case 'C': case 'c': return 2;
    case 'G': case 'g': return 3;
    case 'N': case 'n': return -1;
    default: return -2;
  }
}

/// One-hot encode a base string. Case-insensitive; N becomes an all-zero row.
inline Matrix<float> encode_sequence(std::string_view bases) {
  Matrix<float> X = Matrix<float>::Zero(static_cast<Eigen::Index>(bases.size()), 4);
  for (std::size_t i = 0; i < bases.size(); ++i) {
    const int ch = base_channel(bases[i]);
    if (ch == -2) {
      const unsigned char c = static_cast<unsigned char>(bases[i]);
      throw ParseError(i, std::string("invalid base '") + (c >= 32 && c < 127 ? std::string(1, bases[i]) : "\\x" + std::to_string(c)) +
                              "'");
    }
    if (ch >= 0) X(static_cast<Eigen::Index>(i), ch) = 1.0f;
  }
  return X;
}

/// Inverse of encode_sequence (zero rows decode to 'N').
inline std::string decode_sequence(const Matrix<float>& X) {
  PRISM_REQUIRE(X.cols() == 4, "decode_sequence: expected 4 channels");
  std::string s(static_cast<std::size_t>(X.rows()), 'N');
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (int c = 0; c < 4; ++c)
      if (X(i, c) == 1.0f) s[static_cast<std::size_t>(i)] = kBaseOrder[c];
  return s;
}

/// Cut the window [tss - L/2, tss + L/2) out of a contig. Positions outside the
/// contig become zero rows in both the sequence and the signals.
inline std::pair<Matrix<float>, Matrix<float>> window_around_tss(std::string_view full_sequence,
                                                                  const Matrix<float>& full_signals,
                                                                  std::int64_t tss, std::int64_t L) {
  PRISM_REQUIRE(L > 0, "window_around_tss: window length must be positive");
  PRISM_REQUIRE(L % 2 == 0, "window_around_tss: window length must be even");
  const auto n = static_cast<std::int64_t>(full_sequence.size());
  PRISM_REQUIRE(full_signals.rows() == n, "window_around_tss: signal rows must match sequence length");
  const std::int64_t start = tss - L / 2;
  Matrix<float> X = Matrix<float>::Zero(L, 4);
  Matrix<float> S = Matrix<float>::Zero(L, full_signals.cols());
  const std::int64_t lo = std::max<std::int64_t>(start, 0);
  const std::int64_t hi = std::min<std::int64_t>(start + L, n);
  if (hi > lo) {
    X.middleRows(lo - start, hi - lo) = encode_sequence(full_sequence.substr(lo, hi - lo));
    S.middleRows(lo - start, hi - lo) = full_signals.middleRows(lo, hi - lo);
  }
  return {std::move(X), std::move(S)};
}

/// Expression transform applied when a dataset is built from raw CAGE values.
inline float expression_transform(double raw) {
  PRISM_REQUIRE(raw >= 0.0, "expression_transform: raw expression must be non-negative");
  return static_cast<float>(std::log1p(raw));
}

/// Window a raw contig into a record with a log1p-transformed target.
inline GeneRecord build_record(std::string gene_id, std::string chromosome, std::int64_t tss,
                               std::string_view full_sequence, const Matrix<float>& full_signals,
                               double raw_expression, std::vector<float> aux, std::int64_t L) {
  GeneRecord r;
  r.gene_id = std::move(gene_id);
  r.chromosome = std::move(chromosome);
  r.tss = tss;
  std::tie(r.X, r.S) = window_around_tss(full_sequence, full_signals, tss, L);
  r.y = expression_transform(raw_expression);
  r.aux = std::move(aux);
  return r;
}

/// Per-track 99th-percentile value (nearest rank) over every position of every record.
inline std::vector<float> percentile99_per_track(const std::vector<GeneRecord>& records) {
  if (records.empty()) return {};
  const auto d = records.front().tracks();
  std::vector<float> out(static_cast<std::size_t>(d), 0.0f);
  std::vector<float> values;
  for (Eigen::Index t = 0; t < d; ++t) {
    values.clear();
    for (const auto& r : records)
      for (Eigen::Index i = 0; i < r.S.rows(); ++i) values.push_back(r.S(i, t));
    if (values.empty()) continue;
    const std::size_t rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(values.size())));
    const std::size_t idx = std::min(values.size() - 1, rank == 0 ? 0 : rank - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
    out[static_cast<std::size_t>(t)] = values[idx];
  }
  return out;
}

/// Divide each track by its 99th percentile. Tracks whose percentile is zero are
/// left unscaled (scale recorded as 1). Returns the scales used.
inline std::vector<float> normalize_signals(std::vector<GeneRecord>& records) {
  auto scales = percentile99_per_track(records);
  for (auto& s : scales)
    if (!(s > 0.0f)) s = 1.0f;
  for (auto& r : records)
    for (Eigen::Index t = 0; t < r.S.cols(); ++t) r.S.col(t) /= scales[static_cast<std::size_t>(t)];
  return scales;
}

}  // namespace prism::data
