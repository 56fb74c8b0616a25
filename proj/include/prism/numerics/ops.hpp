#pragma once

// Differentiable ops over Tape values.
//
// Sequence batches are stored as (batch * seg_len) x channels with each
// example occupying a contiguous block of `seg_len` rows. Segment-aware ops
// (convolutions, pooling, per-example broadcasts) never mix rows across
// segment boundaries.

#include <cmath>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/numerics/tape.hpp"

namespace prism::ops {

namespace detail {

inline void check_segments(Eigen::Index rows, Eigen::Index seg_len, const char* op) {
  PRISM_REQUIRE(seg_len > 0 && rows % seg_len == 0,
                std::string(op) + ": rows " + std::to_string(rows) + " not a multiple of segment length " +
                    std::to_string(seg_len));
}

inline void check_same_shape(Eigen::Index r1, Eigen::Index c1, Eigen::Index r2, Eigen::Index c2,
                             const char* op) {
  PRISM_REQUIRE(r1 == r2 && c1 == c2, std::string(op) + ": shape mismatch " + std::to_string(r1) + "x" +
                                          std::to_string(c1) + " vs " + std::to_string(r2) + "x" +
                                          std::to_string(c2));
}

}  // namespace detail

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  PRISM_REQUIRE(A.cols() == B.rows(), "matmul: inner dimensions " + std::to_string(A.cols()) + " vs " +
                                          std::to_string(B.rows()));
  Matrix<T> out;
  out.noalias() = A * B;
  return t.push(std::move(out), "matmul", {a, b}, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

/// x + bias broadcast over rows; bias is 1 x cols.
template <typename T>
Var add_bias(Tape<T>& t, Var x, Var bias) {
  const auto& X = t.value(x);
  const auto& b = t.value(bias);
  PRISM_REQUIRE(b.rows() == 1 && b.cols() == X.cols(), "add_bias: bias must be 1 x cols");
  Matrix<T> out = X.rowwise() + b.row(0);
  return t.push(std::move(out), "add_bias", {x, bias}, [x, bias](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(x, g);
    if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
  });
}

/// Affine map applied per row: x W + b.
template <typename T>
Var linear(Tape<T>& t, Var x, Var weight, Var bias) {
  return add_bias(t, matmul(t, x, weight), bias);
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  detail::check_same_shape(A.rows(), A.cols(), B.rows(), B.cols(), "add");
  Matrix<T> out = A + B;
  return t.push(std::move(out), "add", {a, b}, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  detail::check_same_shape(A.rows(), A.cols(), B.rows(), B.cols(), "sub");
  Matrix<T> out = A - B;
  return t.push(std::move(out), "sub", {a, b}, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

/// Elementwise product.
template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  detail::check_same_shape(A.rows(), A.cols(), B.rows(), B.cols(), "mul");
  Matrix<T> out = A.cwiseProduct(B);
  return t.push(std::move(out), "mul", {a, b}, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T s) {
  Matrix<T> out = t.value(a) * s;
  return t.push(std::move(out), "scale", {a},
                [a, s](Tape<T>& tp, const Matrix<T>& g) { tp.accumulate(a, g * s); });
}

template <typename T>
Var add_scalar(Tape<T>& t, Var a, T s) {
  Matrix<T> out = t.value(a).array() + s;
  return t.push(std::move(out), "add_scalar", {a},
                [a](Tape<T>& tp, const Matrix<T>& g) { tp.accumulate(a, g); });
}

template <typename T>
Var sigmoid(Tape<T>& t, Var a) {
  Matrix<T> out = (T(1) / (T(1) + (-t.value(a).array()).exp())).matrix();
  Matrix<T> saved = t.recording() ? out : Matrix<T>();
  return t.push(std::move(out), "sigmoid", {a}, [a, saved = std::move(saved)](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, (g.array() * saved.array() * (T(1) - saved.array())).matrix());
  });
}

template <typename T>
Var relu(Tape<T>& t, Var a) {
  Matrix<T> out = t.value(a).cwiseMax(T(0));
  return t.push(std::move(out), "relu", {a}, [a](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, (tp.value(a).array() > T(0)).select(g, T(0)));
  });
}

template <typename T>
Var exp(Tape<T>& t, Var a) {
  Matrix<T> out = t.value(a).array().exp().matrix();
  Matrix<T> saved = t.recording() ? out : Matrix<T>();
  return t.push(std::move(out), "exp", {a}, [a, saved = std::move(saved)](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g.cwiseProduct(saved));
  });
}

template <typename T>
Var log(Tape<T>& t, Var a) {
  const auto& A = t.value(a);
  PRISM_REQUIRE((A.array() > T(0)).all(), "log: non-positive input");
  Matrix<T> out = A.array().log().matrix();
  return t.push(std::move(out), "log", {a}, [a](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g.cwiseQuotient(tp.value(a)));
  });
}

/// Sum of all entries, as a 1x1 value.
template <typename T>
Var sum(Tape<T>& t, Var a) {
  const auto& A = t.value(a);
  Matrix<T> out(1, 1);
  out(0, 0) = A.sum();
  const auto r = A.rows(), c = A.cols();
  return t.push(std::move(out), "sum", {a}, [a, r, c](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, Matrix<T>::Constant(r, c, g(0, 0)));
  });
}

template <typename T>
Var mean(Tape<T>& t, Var a) {
  const auto& A = t.value(a);
  PRISM_REQUIRE(A.size() > 0, "mean: empty input");
  Matrix<T> out(1, 1);
  out(0, 0) = A.mean();
  const auto r = A.rows(), c = A.cols();
  const T inv = T(1) / static_cast<T>(A.size());
  return t.push(std::move(out), "mean", {a}, [a, r, c, inv](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, Matrix<T>::Constant(r, c, g(0, 0) * inv));
  });
}

/// Per-row sum: rows x 1.
template <typename T>
Var row_sum(Tape<T>& t, Var a) {
  Matrix<T> out = t.value(a).rowwise().sum();
  const auto c = t.value(a).cols();
  return t.push(std::move(out), "row_sum", {a}, [a, c](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g.replicate(1, c));
  });
}

/// Scale each row to unit L2 norm. Zero rows are a contract violation.
template <typename T>
Var row_l2_normalize(Tape<T>& t, Var a) {
  const auto& A = t.value(a);
  Matrix<T> norms = A.rowwise().norm();
  PRISM_REQUIRE((norms.array() > T(0)).all(), "row_l2_normalize: zero-norm row");
  Matrix<T> out = A.array().colwise() / norms.col(0).array();
  Matrix<T> y = out;
  return t.push(std::move(out), "row_l2_normalize", {a},
                [a, y = std::move(y), norms = std::move(norms)](Tape<T>& tp, const Matrix<T>& g) {
                  Matrix<T> dot = g.cwiseProduct(y).rowwise().sum();
                  Matrix<T> gx = (g - (y.array().colwise() * dot.col(0).array()).matrix());
                  tp.accumulate(a, (gx.array().colwise() / norms.col(0).array()).matrix());
                });
}

template <typename T>
Var concat_cols(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  PRISM_REQUIRE(A.rows() == B.rows(), "concat_cols: row count mismatch");
  Matrix<T> out(A.rows(), A.cols() + B.cols());
  out.leftCols(A.cols()) = A;
  out.rightCols(B.cols()) = B;
  const auto ca = A.cols(), cb = B.cols();
  return t.push(std::move(out), "concat_cols", {a, b}, [a, b, ca, cb](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g.leftCols(ca));
    tp.accumulate(b, g.rightCols(cb));
  });
}

/// Stack values with equal column counts on top of each other.
template <typename T>
Var vstack(Tape<T>& t, const std::vector<Var>& parts) {
  PRISM_REQUIRE(!parts.empty(), "vstack: no inputs");
  Eigen::Index rows = 0;
  const auto cols = t.value(parts[0]).cols();
  for (Var p : parts) {
    PRISM_REQUIRE(t.value(p).cols() == cols, "vstack: column count mismatch");
    rows += t.value(p).rows();
  }
  Matrix<T> out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (Var p : parts) {
    offsets.push_back(r);
    out.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  return t.push(std::move(out), "vstack", parts,
                [parts, offsets](Tape<T>& tp, const Matrix<T>& g) {
                  for (std::size_t i = 0; i < parts.size(); ++i)
                    tp.accumulate(parts[i], g.middleRows(offsets[i], tp.value(parts[i]).rows()));
                });
}

template <typename T>
Var slice_rows(Tape<T>& t, Var a, Eigen::Index start, Eigen::Index count) {
  const auto& A = t.value(a);
  PRISM_REQUIRE(start >= 0 && count >= 0 && start + count <= A.rows(), "slice_rows: out of range");
  Matrix<T> out = A.middleRows(start, count);
  const auto r = A.rows(), c = A.cols();
  return t.push(std::move(out), "slice_rows", {a}, [a, start, count, r, c](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T> full = Matrix<T>::Zero(r, c);
    full.middleRows(start, count) = g;
    tp.accumulate(a, full);
  });
}

template <typename T>
Var slice_cols(Tape<T>& t, Var a, Eigen::Index start, Eigen::Index count) {
  const auto& A = t.value(a);
  PRISM_REQUIRE(start >= 0 && count >= 0 && start + count <= A.cols(), "slice_cols: out of range");
  Matrix<T> out = A.middleCols(start, count);
  const auto r = A.rows(), c = A.cols();
  return t.push(std::move(out), "slice_cols", {a}, [a, start, count, r, c](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T> full = Matrix<T>::Zero(r, c);
    full.middleCols(start, count) = g;
    tp.accumulate(a, full);
  });
}

/// h (batch*seg_len x C) times a (batch x C), each row of `a` broadcast over its segment.
template <typename T>
Var mul_segments(Tape<T>& t, Var h, Var a, Eigen::Index seg_len) {
  const auto& H = t.value(h);
  const auto& A = t.value(a);
  detail::check_segments(H.rows(), seg_len, "mul_segments");
  PRISM_REQUIRE(A.rows() * seg_len == H.rows() && A.cols() == H.cols(),
                "mul_segments: weights must be batch x channels");
  Matrix<T> out(H.rows(), H.cols());
  for (Eigen::Index s = 0; s < A.rows(); ++s)
    out.middleRows(s * seg_len, seg_len) =
        H.middleRows(s * seg_len, seg_len).array().rowwise() * A.row(s).array();
  return t.push(std::move(out), "mul_segments", {h, a}, [h, a, seg_len](Tape<T>& tp, const Matrix<T>& g) {
    const auto& Hv = tp.value(h);
    const auto& Av = tp.value(a);
    if (tp.requires_grad(h)) {
      Matrix<T> gh(Hv.rows(), Hv.cols());
      for (Eigen::Index s = 0; s < Av.rows(); ++s)
        gh.middleRows(s * seg_len, seg_len) =
            g.middleRows(s * seg_len, seg_len).array().rowwise() * Av.row(s).array();
      tp.accumulate(h, gh);
    }
    if (tp.requires_grad(a)) {
      Matrix<T> ga(Av.rows(), Av.cols());
      for (Eigen::Index s = 0; s < Av.rows(); ++s)
        ga.row(s) = g.middleRows(s * seg_len, seg_len).cwiseProduct(Hv.middleRows(s * seg_len, seg_len))
                        .colwise()
                        .sum();
      tp.accumulate(a, ga);
    }
  });
}

/// Unfold each segment into kernel-wide windows with zero "same" padding.
/// Output column block k holds the row at offset k - (kernel-1)/2.
template <typename T>
Var im2col(Tape<T>& t, Var x, Eigen::Index kernel, Eigen::Index seg_len) {
  const auto& X = t.value(x);
  detail::check_segments(X.rows(), seg_len, "im2col");
  PRISM_REQUIRE(kernel >= 1, "im2col: kernel must be positive");
  const auto C = X.cols();
  const auto segs = X.rows() / seg_len;
  const Eigen::Index pad = (kernel - 1) / 2;
  Matrix<T> out = Matrix<T>::Zero(X.rows(), kernel * C);
  for (Eigen::Index s = 0; s < segs; ++s) {
    const auto base = s * seg_len;
    for (Eigen::Index k = 0; k < kernel; ++k) {
      const auto off = k - pad;
      const auto lo = std::max<Eigen::Index>(0, -off);
      const auto hi = std::min<Eigen::Index>(seg_len, seg_len - off);
      if (hi > lo) out.block(base + lo, k * C, hi - lo, C) = X.middleRows(base + lo + off, hi - lo);
    }
  }
  return t.push(std::move(out), "im2col", {x}, [x, kernel, seg_len, pad, C, segs](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T> gx = Matrix<T>::Zero(segs * seg_len, C);
    for (Eigen::Index s = 0; s < segs; ++s) {
      const auto base = s * seg_len;
      for (Eigen::Index k = 0; k < kernel; ++k) {
        const auto off = k - pad;
        const auto lo = std::max<Eigen::Index>(0, -off);
        const auto hi = std::min<Eigen::Index>(seg_len, seg_len - off);
        if (hi > lo) gx.middleRows(base + lo + off, hi - lo) += g.block(base + lo, k * C, hi - lo, C);
      }
    }
    tp.accumulate(x, gx);
  });
}

/// Per-channel convolution with "same" padding: out[r,c] = sum_k w[k,c] x[r+k-pad, c].
template <typename T>
Var depthwise_conv(Tape<T>& t, Var x, Var w, Eigen::Index seg_len) {
  const auto& X = t.value(x);
  const auto& W = t.value(w);
  detail::check_segments(X.rows(), seg_len, "depthwise_conv");
  PRISM_REQUIRE(W.cols() == X.cols(), "depthwise_conv: weight must be kernel x channels");
  const auto kernel = W.rows();
  const auto segs = X.rows() / seg_len;
  const Eigen::Index pad = (kernel - 1) / 2;
  Matrix<T> out = Matrix<T>::Zero(X.rows(), X.cols());
  for (Eigen::Index s = 0; s < segs; ++s) {
    const auto base = s * seg_len;
    for (Eigen::Index k = 0; k < kernel; ++k) {
      const auto off = k - pad;
      const auto lo = std::max<Eigen::Index>(0, -off);
      const auto hi = std::min<Eigen::Index>(seg_len, seg_len - off);
      if (hi > lo)
        out.middleRows(base + lo, hi - lo).array() +=
            X.middleRows(base + lo + off, hi - lo).array().rowwise() * W.row(k).array();
    }
  }
  return t.push(std::move(out), "depthwise_conv", {x, w}, [x, w, seg_len, pad, segs](Tape<T>& tp, const Matrix<T>& g) {
    const auto& Xv = tp.value(x);
    const auto& Wv = tp.value(w);
    const bool gx_needed = tp.requires_grad(x);
    const bool gw_needed = tp.requires_grad(w);
    Matrix<T> gx = gx_needed ? Matrix<T>::Zero(Xv.rows(), Xv.cols()) : Matrix<T>();
    Matrix<T> gw = gw_needed ? Matrix<T>::Zero(Wv.rows(), Wv.cols()) : Matrix<T>();
    for (Eigen::Index s = 0; s < segs; ++s) {
      const auto base = s * seg_len;
      for (Eigen::Index k = 0; k < Wv.rows(); ++k) {
        const auto off = k - pad;
        const auto lo = std::max<Eigen::Index>(0, -off);
        const auto hi = std::min<Eigen::Index>(seg_len, seg_len - off);
        if (hi <= lo) continue;
        const auto gblk = g.middleRows(base + lo, hi - lo);
        if (gx_needed)
          gx.middleRows(base + lo + off, hi - lo).array() += gblk.array().rowwise() * Wv.row(k).array();
        if (gw_needed)
          gw.row(k) += gblk.cwiseProduct(Xv.middleRows(base + lo + off, hi - lo)).colwise().sum();
      }
    }
    if (gx_needed) tp.accumulate(x, gx);
    if (gw_needed) tp.accumulate(w, gw);
  });
}

/// Non-overlapping max pool of `width` rows within each segment. Trailing rows
/// that do not fill a window are dropped (floor semantics). Ties go to the first row.
template <typename T>
Var max_pool(Tape<T>& t, Var x, Eigen::Index width, Eigen::Index seg_len) {
  const auto& X = t.value(x);
  detail::check_segments(X.rows(), seg_len, "max_pool");
  const auto out_len = seg_len / width;
  PRISM_REQUIRE(out_len >= 1, "max_pool: segment of " + std::to_string(seg_len) + " rows is shorter than width " +
                                  std::to_string(width));
  const auto segs = X.rows() / seg_len;
  const auto C = X.cols();
  Matrix<T> out(segs * out_len, C);
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg(segs * out_len, C);
  for (Eigen::Index s = 0; s < segs; ++s)
    for (Eigen::Index j = 0; j < out_len; ++j) {
      const auto src = s * seg_len + j * width;
      const auto dst = s * out_len + j;
      out.row(dst) = X.row(src);
      arg.row(dst).setConstant(src);
      for (Eigen::Index q = 1; q < width; ++q)
        for (Eigen::Index c = 0; c < C; ++c)
          if (X(src + q, c) > out(dst, c)) {
            out(dst, c) = X(src + q, c);
            arg(dst, c) = src + q;
          }
    }
  const auto rows = X.rows();
  return t.push(std::move(out), "max_pool", {x}, [x, arg = std::move(arg), rows, C](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T> gx = Matrix<T>::Zero(rows, C);
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      for (Eigen::Index c = 0; c < C; ++c) gx(arg(r, c), c) += g(r, c);
    tp.accumulate(x, gx);
  });
}

/// Average over the rows of each segment: (segments x C).
template <typename T>
Var mean_pool(Tape<T>& t, Var x, Eigen::Index seg_len) {
  const auto& X = t.value(x);
  detail::check_segments(X.rows(), seg_len, "mean_pool");
  const auto segs = X.rows() / seg_len;
  Matrix<T> out(segs, X.cols());
  for (Eigen::Index s = 0; s < segs; ++s) out.row(s) = X.middleRows(s * seg_len, seg_len).colwise().mean();
  const T inv = T(1) / static_cast<T>(seg_len);
  return t.push(std::move(out), "mean_pool", {x}, [x, seg_len, inv](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T> gx(g.rows() * seg_len, g.cols());
    for (Eigen::Index s = 0; s < g.rows(); ++s) gx.middleRows(s * seg_len, seg_len).rowwise() = g.row(s) * inv;
    tp.accumulate(x, gx);
  });
}

/// Batch statistics produced by a training-mode batch norm.
template <typename T>
struct BatchStats {
  Matrix<T> mean;      // 1 x C
  Matrix<T> variance;  // 1 x C, biased (divides by N)
  Eigen::Index count = 0;
};

/// Training-mode batch normalization over all rows, per column.
template <typename T>
Var batch_norm_train(Tape<T>& t, Var x, Var gamma, Var beta, T eps, BatchStats<T>* stats = nullptr) {
  const auto& X = t.value(x);
  const auto N = X.rows();
  PRISM_REQUIRE(N > 0, "batch_norm: empty batch");
  Matrix<T> mu = X.colwise().mean();
  Matrix<T> centered = X.rowwise() - mu.row(0);
  Matrix<T> var = centered.array().square().colwise().mean().matrix();
  Matrix<T> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<T> xhat = centered.array().rowwise() * inv_std.row(0).array();
  Matrix<T> out = (xhat.array().rowwise() * t.value(gamma).row(0).array()).rowwise() + t.value(beta).row(0).array();
  if (stats != nullptr) {
    stats->mean = mu;
    stats->variance = var;
    stats->count = N;
  }
  return t.push(std::move(out), "batch_norm", {x, gamma, beta},
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), N](Tape<T>& tp,
                                                                                          const Matrix<T>& g) {
                  if (tp.requires_grad(gamma)) tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                  if (tp.requires_grad(beta)) tp.accumulate(beta, g.colwise().sum());
                  if (tp.requires_grad(x)) {
                    Matrix<T> gxhat = g.array().rowwise() * tp.value(gamma).row(0).array();
                    Matrix<T> sum_g = gxhat.colwise().sum();
                    Matrix<T> sum_gx = gxhat.cwiseProduct(xhat).colwise().sum();
                    const T n = static_cast<T>(N);
                    Matrix<T> gx = ((gxhat * n).rowwise() - sum_g.row(0)) -
                                   (xhat.array().rowwise() * sum_gx.row(0).array()).matrix();
                    gx = (gx.array().rowwise() * (inv_std.row(0).array() / n)).matrix();
                    tp.accumulate(x, gx);
                  }
                });
}

/// Evaluation-mode batch normalization with fixed running statistics.
template <typename T>
Var batch_norm_eval(Tape<T>& t, Var x, Var gamma, Var beta, const Matrix<T>& running_mean,
                    const Matrix<T>& running_var, T eps) {
  const auto& X = t.value(x);
  Matrix<T> inv_std = (running_var.array() + eps).rsqrt().matrix();
  Matrix<T> xhat = (X.rowwise() - running_mean.row(0)).array().rowwise() * inv_std.row(0).array();
  Matrix<T> out = (xhat.array().rowwise() * t.value(gamma).row(0).array()).rowwise() + t.value(beta).row(0).array();
  return t.push(std::move(out), "batch_norm_eval", {x, gamma, beta},
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tp,
                                                                                      const Matrix<T>& g) {
                  if (tp.requires_grad(gamma)) tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                  if (tp.requires_grad(beta)) tp.accumulate(beta, g.colwise().sum());
                  if (tp.requires_grad(x))
                    tp.accumulate(x, (g.array().rowwise() * (tp.value(gamma).row(0).array() * inv_std.row(0).array()))
                                         .matrix());
                });
}

/// Mean Huber (smooth L1) loss between a column of predictions and constant targets.
template <typename T>
Var huber_mean(Tape<T>& t, Var pred, const Matrix<T>& target, T delta) {
  const auto& P = t.value(pred);
  PRISM_REQUIRE(delta > T(0), "huber: delta must be positive");
  detail::check_same_shape(P.rows(), P.cols(), target.rows(), target.cols(), "huber_mean");
  PRISM_REQUIRE(P.size() > 0, "huber_mean: empty batch");
  Matrix<T> diff = P - target;
  T total = 0;
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    const T a = std::abs(diff(i));
    total += a <= delta ? T(0.5) * a * a : delta * (a - T(0.5) * delta);
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total / static_cast<T>(diff.size());
  return t.push(std::move(out), "huber_mean", {pred},
                [pred, diff = std::move(diff), delta](Tape<T>& tp, const Matrix<T>& g) {
                  const T s = g(0, 0) / static_cast<T>(diff.size());
                  tp.accumulate(pred, (diff.array().max(-delta).min(delta) * s).matrix());
                });
}

/// Average of same-shaped values.
template <typename T>
Var average(Tape<T>& t, const std::vector<Var>& parts) {
  PRISM_REQUIRE(!parts.empty(), "average: no inputs");
  Var acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(t, acc, parts[i]);
  if (parts.size() == 1) return acc;
  return scale(t, acc, T(1) / static_cast<T>(parts.size()));
}

}  // namespace prism::ops
