#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "tgauge/errors.hpp"
#include "tgauge/rng.hpp"

namespace tgauge {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;
using Index = Eigen::Index;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.derived().allFinite()) throw NonFiniteInput(std::string(what) + ": non-finite entry");
}

/// Relative spread below which a vector counts as constant for layer norm.
inline constexpr double kDegeneracyThreshold = 1e-12;

/// Strict layer normalization: subtract the mean, divide by the population
/// standard deviation. No epsilon and no gain/bias, so the map commutes
/// exactly with any orthogonal matrix that fixes the all-ones vector.
template <typename Derived>
Vec<typename Derived::Scalar> strict_layer_norm(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  static_assert(Derived::ColsAtCompileTime == 1 || Derived::ColsAtCompileTime == Eigen::Dynamic);
  const Index d = x.size();
  if (d < 2) throw DegenerateInput("strict_layer_norm: need at least 2 entries");
  require_finite(x, "strict_layer_norm");
  const Scalar mean = x.mean();
  Vec<Scalar> centered = x.array() - mean;
  const Scalar stddev = std::sqrt(centered.squaredNorm() / Scalar(d));
  const Scalar scale = Scalar(1) + x.cwiseAbs().maxCoeff();
  if (!(stddev >= Scalar(kDegeneracyThreshold) * scale))
    throw DegenerateInput("strict_layer_norm: constant input vector");
  return centered / stddev;
}

/// Column-wise strict layer norm of a d_e x n_c embedding matrix.
template <typename Derived>
Mat<typename Derived::Scalar> layer_norm_columns(const Eigen::MatrixBase<Derived>& e) {
  Mat<typename Derived::Scalar> out(e.rows(), e.cols());
  for (Index i = 0; i < e.cols(); ++i) out.col(i) = strict_layer_norm(e.col(i));
  return out;
}

/// Row-wise softmax over the causal (lower-triangular) part of a square score
/// matrix. Masked entries are excluded from the normalization and set to
/// exactly zero.
template <typename Derived>
Mat<typename Derived::Scalar> masked_row_softmax(const Eigen::MatrixBase<Derived>& scores) {
  using Scalar = typename Derived::Scalar;
  if (scores.rows() != scores.cols()) throw ShapeMismatch("masked_row_softmax: scores must be square");
  require_finite(scores, "masked_row_softmax");
  const Index n = scores.rows();
  Mat<Scalar> out = Mat<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    auto visible = scores.row(i).head(i + 1);
    const Scalar peak = visible.maxCoeff();
    auto row = out.row(i).head(i + 1);
    row = (visible.array() - peak).exp().matrix();
    row /= row.sum();
  }
  return out;
}

/// Column-wise softmax; each column of the result is a probability vector.
template <typename Derived>
Mat<typename Derived::Scalar> column_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  require_finite(logits, "column_softmax");
  Mat<Scalar> out(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const Scalar peak = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - peak).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

/// Orthonormal basis of the hyperplane perpendicular to (1, ..., 1), as the
/// columns of a d x (d-1) matrix. Column k is the normalized Helmert contrast
/// (1, ..., 1, -k, 0, ..., 0) with k leading ones.
template <typename Scalar = double>
Mat<Scalar> complement_basis(Index d) {
  if (d < 2) throw ShapeMismatch("complement_basis: d must be >= 2");
  Mat<Scalar> b = Mat<Scalar>::Zero(d, d - 1);
  for (Index k = 1; k < d; ++k) {
    const Scalar norm = std::sqrt(Scalar(k) * Scalar(k + 1));
    b.col(k - 1).head(k).setConstant(Scalar(1) / norm);
    b(k, k - 1) = -Scalar(k) / norm;
  }
  return b;
}

/// Matrix of i.i.d. standard normal entries times `scale`. Filled row by row
/// so the draw order matches the row-major file layout.
template <typename Scalar = double>
Mat<Scalar> sample_gaussian(Index rows, Index cols, RngStream& rng, Scalar scale = Scalar(1)) {
  Mat<Scalar> m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * Scalar(rng.normal());
  return m;
}

template <typename Derived>
typename Derived::Scalar determinant(const Eigen::MatrixBase<Derived>& m) {
  return Eigen::PartialPivLU<Mat<typename Derived::Scalar>>(m).determinant();
}

/// 2-norm condition number from the singular values; +inf when singular.
template <typename Derived>
typename Derived::Scalar condition_number(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<Mat<Scalar>> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return Scalar(1);
  const Scalar smallest = s(s.size() - 1);
  if (smallest == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return s(0) / smallest;
}

/// Explicit inverse through an LU factorization with full pivoting.
template <typename Derived>
Mat<typename Derived::Scalar> lu_inverse(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::FullPivLU<Mat<Scalar>> lu(m);
  if (!lu.isInvertible()) throw RankDeficient(-1, -1, "lu_inverse: matrix is singular");
  return lu.inverse();
}

/// Haar-distributed element of SO(d): QR of a Gaussian matrix with the sign
/// of each R diagonal entry folded into Q, then one column flipped if the
/// determinant came out negative.
template <typename Scalar = double>
Mat<Scalar> sample_rotation(Index d, RngStream& rng) {
  if (d < 1) throw ShapeMismatch("sample_rotation: d must be >= 1");
  const Mat<Scalar> a = sample_gaussian<Scalar>(d, d, rng);
  Eigen::HouseholderQR<Mat<Scalar>> qr(a);
  Mat<Scalar> q = qr.householderQ() * Mat<Scalar>::Identity(d, d);
  const Mat<Scalar> r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Index k = 0; k < d; ++k)
    if (r(k, k) < Scalar(0)) q.col(k) = -q.col(k);
  if (determinant(q) < Scalar(0)) q.col(0) = -q.col(0);
  return q;
}

inline constexpr int kMaxInvertibleDraws = 64;

/// Invertible d x d matrix with 2-norm condition number <= max_condition,
/// drawn as a Gaussian matrix scaled by 1/sqrt(d) and resampled until the
/// bound holds.
template <typename Scalar = double>
Mat<Scalar> sample_invertible(Index d, double max_condition, RngStream& rng) {
  if (d < 1) throw ShapeMismatch("sample_invertible: d must be >= 1");
  if (!(max_condition > 1.0)) throw SamplingExhausted("sample_invertible: max_condition must exceed 1");
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(d));
  for (int attempt = 0; attempt < kMaxInvertibleDraws; ++attempt) {
    Mat<Scalar> h = sample_gaussian<Scalar>(d, d, rng, scale);
    if (condition_number(h) <= Scalar(max_condition)) return h;
  }
  throw SamplingExhausted("sample_invertible: no draw met condition bound " +
                          std::to_string(max_condition) + " after " +
                          std::to_string(kMaxInvertibleDraws) + " attempts");
}

/// max_i |a_i - b_i| / max_i |b_i|, i.e. deviation relative to the
/// reference's max-norm. Zero when both are zero.
template <typename DA, typename DB>
double max_normwise_deviation(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch("max_normwise_deviation: shape mismatch");
  const double diff = static_cast<double>((a - b).cwiseAbs().maxCoeff());
  const double ref = static_cast<double>(b.cwiseAbs().maxCoeff());
  if (diff == 0.0) return 0.0;
  return ref == 0.0 ? std::numeric_limits<double>::infinity() : diff / ref;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|), entry by entry (0/0 counts as 0).
template <typename DA, typename DB>
double max_elementwise_deviation(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch("max_elementwise_deviation: shape mismatch");
  double worst = 0.0;
  for (Index c = 0; c < a.cols(); ++c) {
    for (Index r = 0; r < a.rows(); ++r) {
      const double x = static_cast<double>(a(r, c));
      const double y = static_cast<double>(b(r, c));
      const double diff = std::abs(x - y);
      if (std::isnan(diff)) return std::numeric_limits<double>::infinity();
      if (diff == 0.0) continue;
      worst = std::max(worst, diff / std::max(std::abs(x), std::abs(y)));
    }
  }
  return worst;
}

}  // namespace tgauge
