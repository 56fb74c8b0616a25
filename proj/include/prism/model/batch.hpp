#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "prism/data/record.hpp"
#include "prism/errors.hpp"
#include "prism/numerics/tensor.hpp"

namespace prism::model {

/// Records stacked for one forward pass: each example is a block of
/// `seg_len` consecutive rows of X and S.
template <typename T>
struct Batch {
  Matrix<T> X;    // (size * seg_len) x 4
  Matrix<T> S;    // (size * seg_len) x d
  Matrix<T> aux;  // size x k
  Matrix<T> y;    // size x 1
  Eigen::Index size = 0;
  Eigen::Index seg_len = 0;
};

template <typename T>
Batch<T> make_batch(const std::vector<data::GeneRecord>& records, std::span<const std::size_t> indices) {
  PRISM_REQUIRE(!indices.empty(), "make_batch: empty batch");
  const auto& first = records.at(indices[0]);
  const Eigen::Index L = first.length();
  const Eigen::Index d = first.tracks();
  const auto k = static_cast<Eigen::Index>(first.aux.size());
  const auto B = static_cast<Eigen::Index>(indices.size());
  Batch<T> b;
  b.size = B;
  b.seg_len = L;
  b.X.resize(B * L, 4);
  b.S.resize(B * L, d);
  b.aux.resize(B, k);
  b.y.resize(B, 1);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& r = records.at(indices[static_cast<std::size_t>(i)]);
    PRISM_REQUIRE(r.length() == L && r.tracks() == d && static_cast<Eigen::Index>(r.aux.size()) == k,
                  "make_batch: record " + r.gene_id + " does not match batch shape");
    b.X.middleRows(i * L, L) = r.X.template cast<T>();
    b.S.middleRows(i * L, L) = r.S.template cast<T>();
    for (Eigen::Index j = 0; j < k; ++j) b.aux(i, j) = static_cast<T>(r.aux[static_cast<std::size_t>(j)]);
    b.y(i, 0) = static_cast<T>(r.y);
  }
  return b;
}

template <typename T>
Batch<T> make_batch(const std::vector<data::GeneRecord>& records) {
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return make_batch<T>(records, idx);
}

}  // namespace prism::model
