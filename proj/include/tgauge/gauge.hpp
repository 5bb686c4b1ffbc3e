#pragma once

#include <string>
#include <vector>

#include "tgauge/model.hpp"

namespace tgauge {

/// Lifts R in SO(d-1) to the subgroup of SO(d) that fixes (1, ..., 1):
/// g = B R B^T + J / d, with B = complement_basis(d) and J the all-ones matrix.
template <typename Derived>
Mat<typename Derived::Scalar> embed_ones_fixing_rotation(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  if (r.rows() != r.cols()) throw ShapeMismatch("embed_ones_fixing_rotation: R must be square");
  const Index d = r.rows() + 1;
  const Mat<Scalar> b = complement_basis<Scalar>(d);
  Mat<Scalar> g = b * r * b.transpose();
  g.array() += Scalar(1) / Scalar(d);
  return g;
}

template <typename Scalar = double>
Mat<Scalar> sample_ones_fixing_rotation(Index d, RngStream& rng) {
  return embed_ones_fixing_rotation(sample_rotation<Scalar>(d - 1, rng));
}

/// An element of the symmetry group acting on a WeightSet.
///
/// Stored: the embedding rotations and, per block and head, the key-side
/// (h1) and value-side (h3) invertible head maps. The query-side map is
/// h1^{-T} and the linear-layer factor is blockdiag(h3)^{-1}; both are
/// computed on demand. The feed-forward hidden space admits no freedom
/// (the elementwise nonlinearity pins it to the identity).
///
/// Standard mode keeps a single rotation g0[0] shared by every block.
/// Extended mode keeps g0[b] (frame of block b's input) and g4[b] (frame of
/// the post-attention residual stream) for every block b; the output of
/// block b lives in frame g0[b+1], and the output of the last block is
/// mapped back to frame g0[0], so the whole stack is equivariant under g0[0]
/// with U transformed accordingly.
template <typename Scalar>
struct GaugeElement {
  std::vector<Mat<Scalar>> g0;
  std::vector<Mat<Scalar>> g4;
  std::vector<std::vector<Mat<Scalar>>> h1;  ///< [block][head]
  std::vector<std::vector<Mat<Scalar>>> h3;  ///< [block][head]

  bool extended() const { return !g4.empty(); }
  std::size_t n_blocks() const { return h1.size(); }

  /// Query-side head map, h1^{-T}.
  Mat<Scalar> h2(std::size_t block, std::size_t head) const {
    return lu_inverse(h1[block][head]).transpose();
  }

  /// blockdiag_a(h3[block][a])^{-1}, the right factor applied to L.
  Mat<Scalar> h4_bar(std::size_t block) const {
    const auto& heads = h3[block];
    Index total = 0;
    for (const auto& h : heads) total += h.rows();
    Mat<Scalar> out = Mat<Scalar>::Zero(total, total);
    Index offset = 0;
    for (const auto& h : heads) {
      out.block(offset, offset, h.rows(), h.rows()) = lu_inverse(h);
      offset += h.rows();
    }
    return out;
  }

  /// Frame of block `b`'s input embeddings.
  const Mat<Scalar>& input_frame(std::size_t b) const { return extended() ? g0[b] : g0[0]; }
  /// Frame of block `b`'s residual stream after attention.
  const Mat<Scalar>& middle_frame(std::size_t b) const { return extended() ? g4[b] : g0[0]; }
  /// Frame of block `b`'s output.
  const Mat<Scalar>& output_frame(std::size_t b) const {
    if (!extended()) return g0[0];
    return b + 1 < g0.size() ? g0[b + 1] : g0[0];
  }
  /// Rotation applied to the initial embeddings (and, transposed, to U).
  const Mat<Scalar>& embedding_rotation() const { return g0[0]; }
};

template <typename Scalar = double>
GaugeElement<Scalar> identity_gauge(const ModelConfig& config) {
  config.validate();
  GaugeElement<Scalar> g;
  const Mat<Scalar> eye = Mat<Scalar>::Identity(config.d_e, config.d_e);
  const Mat<Scalar> head_eye = Mat<Scalar>::Identity(config.d_h, config.d_h);
  const auto n_t = static_cast<std::size_t>(config.n_t);
  g.g0.assign(config.extended ? std::max<std::size_t>(n_t, 1) : 1, eye);
  if (config.extended) g.g4.assign(n_t, eye);
  g.h1.assign(n_t, std::vector<Mat<Scalar>>(static_cast<std::size_t>(config.n_h), head_eye));
  g.h3 = g.h1;
  return g;
}

inline constexpr double kDefaultMaxCondition = 1e3;

/// Random group element: Haar rotations fixing the all-ones vector and
/// head maps with condition number <= max_condition.
template <typename Scalar = double>
GaugeElement<Scalar> sample_gauge(const ModelConfig& config, RngStream& rng,
                                  double max_condition = kDefaultMaxCondition) {
  GaugeElement<Scalar> g = identity_gauge<Scalar>(config);
  for (auto& r : g.g0) r = sample_ones_fixing_rotation<Scalar>(config.d_e, rng);
  for (auto& r : g.g4) r = sample_ones_fixing_rotation<Scalar>(config.d_e, rng);
  for (std::size_t b = 0; b < g.h1.size(); ++b) {
    for (std::size_t a = 0; a < g.h1[b].size(); ++a) {
      g.h1[b][a] = sample_invertible<Scalar>(config.d_h, max_condition, rng);
      g.h3[b][a] = sample_invertible<Scalar>(config.d_h, max_condition, rng);
    }
  }
  return g;
}

/// Structural check: counts and shapes of every member against `config`.
template <typename Scalar>
void check_gauge_shape(const GaugeElement<Scalar>& g, const ModelConfig& config) {
  const auto n_t = static_cast<std::size_t>(config.n_t);
  const std::size_t want_g0 = config.extended ? std::max<std::size_t>(n_t, 1) : 1;
  const std::size_t want_g4 = config.extended ? n_t : 0;
  std::string bad;
  if (g.g0.size() != want_g0) bad += " g0 count";
  if (g.g4.size() != want_g4) bad += " g4 count";
  if (g.h1.size() != n_t || g.h3.size() != n_t) bad += " block count";
  for (const auto* set : {&g.g0, &g.g4})
    for (const auto& m : *set)
      if (m.rows() != config.d_e || m.cols() != config.d_e) bad += " rotation shape";
  for (const auto* set : {&g.h1, &g.h3})
    for (const auto& heads : *set) {
      if (heads.size() != static_cast<std::size_t>(config.n_h)) bad += " head count";
      for (const auto& h : heads)
        if (h.rows() != config.d_h || h.cols() != config.d_h) bad += " head-map shape";
    }
  if (!bad.empty()) throw ShapeMismatch("gauge element does not match config:" + bad);
}

/// Lists violated group-membership invariants (orthogonality, all-ones
/// fixed, det +1, head-map conditioning). Empty when `g` is a valid element.
template <typename Scalar>
std::vector<std::string> gauge_problems(const GaugeElement<Scalar>& g,
                                        double max_condition = kDefaultMaxCondition,
                                        double tol = 1e-12) {
  std::vector<std::string> problems;
  const auto rot = [&](const Mat<Scalar>& r, const std::string& name) {
    const Index d = r.rows();
    const Vec<Scalar> ones = Vec<Scalar>::Ones(d);
    if ((r.transpose() * r - Mat<Scalar>::Identity(d, d)).cwiseAbs().maxCoeff() >= tol)
      problems.push_back(name + ": not orthogonal");
    if ((r * ones - ones).cwiseAbs().maxCoeff() >= tol)
      problems.push_back(name + ": does not fix the all-ones vector");
    if (std::abs(determinant(r) - Scalar(1)) >= tol) problems.push_back(name + ": det != +1");
  };
  for (std::size_t i = 0; i < g.g0.size(); ++i) rot(g.g0[i], "g0[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < g.g4.size(); ++i) rot(g.g4[i], "g4[" + std::to_string(i) + "]");
  for (const auto& [set, name] : {std::pair{&g.h1, "h1"}, std::pair{&g.h3, "h3"}})
    for (std::size_t b = 0; b < set->size(); ++b)
      for (std::size_t a = 0; a < (*set)[b].size(); ++a)
        if (!(condition_number((*set)[b][a]) <= Scalar(max_condition)))
          problems.push_back(std::string(name) + "[" + std::to_string(b) + "][" +
                             std::to_string(a) + "]: condition number above bound");
  return problems;
}

/// Transforms every weight matrix so that the gauged model, fed
/// g0[0] E0, produces g0[0] times the original output, and hence identical
/// next-token distributions through the transformed U.
///
/// Orientation of each rule (in = input_frame, mid = middle_frame,
/// out = output_frame of the block; all rotations are orthogonal):
///   K  <- h1 K in^T          scores (Q Ebar)^T (K Ebar) keep their value since
///   Q  <- h1^{-T} Q in^T     h1^{-T T} h1 = I and in^T in = I
///   V  <- h3 V in^T          each head output picks up a left factor h3
///   L  <- mid L blockdiag(h3)^{-1}
///   G  <- mid G in^T         (extended only; standard skip needs mid == in)
///   W  <- W mid^T
///   What <- out What
///   Gbar <- out Gbar mid^T   (extended only; standard skip needs out == mid)
///   U  <- U g0[0]^T
template <typename Scalar>
WeightSet<Scalar> apply_gauge(const WeightSet<Scalar>& w, const GaugeElement<Scalar>& g,
                              const ModelConfig& config) {
  validate_weights(w, config);
  check_gauge_shape(g, config);
  WeightSet<Scalar> out = w;
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const auto& src = w.blocks[b];
    auto& dst = out.blocks[b];
    const Mat<Scalar>& in = g.input_frame(b);
    const Mat<Scalar>& mid = g.middle_frame(b);
    const Mat<Scalar>& fin = g.output_frame(b);
    for (std::size_t a = 0; a < src.Q.size(); ++a) {
      dst.K[a] = g.h1[b][a] * src.K[a] * in.transpose();
      dst.Q[a] = g.h2(b, a) * src.Q[a] * in.transpose();
      dst.V[a] = g.h3[b][a] * src.V[a] * in.transpose();
    }
    dst.L = mid * src.L * g.h4_bar(b);
    dst.W = src.W * mid.transpose();
    dst.W_hat = fin * src.W_hat;
    if (config.extended) {
      dst.G = mid * *src.G * in.transpose();
      dst.G_bar = fin * *src.G_bar * mid.transpose();
    }
  }
  out.U = w.U * g.embedding_rotation().transpose();
  return out;
}

/// The initial embeddings in the gauged frame: g0[0] E0.
template <typename Derived>
Mat<typename Derived::Scalar> transform_embeddings(const Eigen::MatrixBase<Derived>& e0,
                                                   const GaugeElement<typename Derived::Scalar>& g) {
  return g.embedding_rotation() * e0;
}

/// Group product a * b: applying it equals applying b, then a.
template <typename Scalar>
GaugeElement<Scalar> compose(const GaugeElement<Scalar>& a, const GaugeElement<Scalar>& b) {
  if (a.g0.size() != b.g0.size() || a.g4.size() != b.g4.size() || a.h1.size() != b.h1.size() ||
      a.h3.size() != b.h3.size())
    throw ShapeMismatch("compose: gauge elements have different structure");
  GaugeElement<Scalar> c = a;
  for (std::size_t i = 0; i < a.g0.size(); ++i) c.g0[i] = a.g0[i] * b.g0[i];
  for (std::size_t i = 0; i < a.g4.size(); ++i) c.g4[i] = a.g4[i] * b.g4[i];
  for (std::size_t blk = 0; blk < a.h1.size(); ++blk) {
    if (a.h1[blk].size() != b.h1[blk].size() || a.h3[blk].size() != b.h3[blk].size())
      throw ShapeMismatch("compose: head counts differ");
    for (std::size_t h = 0; h < a.h1[blk].size(); ++h) {
      c.h1[blk][h] = a.h1[blk][h] * b.h1[blk][h];
      c.h3[blk][h] = a.h3[blk][h] * b.h3[blk][h];
    }
  }
  return c;
}

template <typename Scalar>
GaugeElement<Scalar> invert(const GaugeElement<Scalar>& a) {
  GaugeElement<Scalar> inv = a;
  for (auto& r : inv.g0) r.transposeInPlace();
  for (auto& r : inv.g4) r.transposeInPlace();
  for (auto* set : {&inv.h1, &inv.h3})
    for (auto& heads : *set)
      for (auto& h : heads) h = lu_inverse(h);
  return inv;
}

// ---------------------------------------------------------------------------
// Head-space gauge fixing

enum class HeadFixStatus { Fixed, AlreadyCanonical, RankDeficient };

std::string_view to_string(HeadFixStatus s);

struct HeadFixEntry {
  int block = 0;
  int head = 0;
  char matrix = 'K';  ///< 'K' (key side, h1) or 'V' (value side, h3)
  HeadFixStatus status = HeadFixStatus::Fixed;
  std::vector<Index> pivots;     ///< columns that now hold the identity
  double pivot_condition = 0.0;  ///< 2-norm condition number of the pivot block
  double identity_residual = 0.0;  ///< max |h M[:, pivots] - I| before snapping
};

struct GaugeFixReport {
  std::vector<HeadFixEntry> entries;
  int d_h = 0;
  double pivot_threshold = 0.0;

  int count(HeadFixStatus s) const {
    int n = 0;
    for (const auto& e : entries) n += e.status == s;
    return n;
  }
  /// Parameters now pinned to the identity (newly or previously).
  long long parameters_eliminated() const {
    return static_cast<long long>(entries.size() - count(HeadFixStatus::RankDeficient)) * d_h * d_h;
  }
  long long parameters_newly_eliminated() const {
    return static_cast<long long>(count(HeadFixStatus::Fixed)) * d_h * d_h;
  }
  bool all_succeeded() const { return count(HeadFixStatus::RankDeficient) == 0; }
};

template <typename Scalar>
struct GaugeFixResult {
  WeightSet<Scalar> weights;
  GaugeElement<Scalar> gauge;
  GaugeFixReport report;
};

inline constexpr double kPivotConditionThreshold = 1e8;

namespace detail {

/// Columns of `m` that already equal the unit vectors e_0..e_{d-1}, in
/// order, if every one of them is present.
template <typename Scalar>
std::optional<std::vector<Index>> canonical_columns(const Mat<Scalar>& m) {
  const Index d = m.rows();
  std::vector<Index> found;
  for (Index unit = 0; unit < d; ++unit) {
    std::optional<Index> hit;
    for (Index c = 0; c < m.cols() && !hit; ++c) {
      bool match = true;
      for (Index r = 0; r < d && match; ++r) match = m(r, c) == (r == unit ? Scalar(1) : Scalar(0));
      if (match) hit = c;
    }
    if (!hit) return std::nullopt;
    found.push_back(*hit);
  }
  return found;
}

/// Chooses d columns of a d x n matrix via column-pivoted QR and returns the
/// map h with h M[:, pivots] = I. Fills `entry` with the diagnostics.
template <typename Scalar>
Mat<Scalar> pivot_head_map(const Mat<Scalar>& m, double threshold, HeadFixEntry& entry) {
  const Index d = m.rows();
  if (auto canon = canonical_columns(m)) {
    entry.status = HeadFixStatus::AlreadyCanonical;
    entry.pivots = *canon;
    entry.pivot_condition = 1.0;
    return Mat<Scalar>::Identity(d, d);
  }
  Eigen::ColPivHouseholderQR<Mat<Scalar>> qr(m);
  const auto& perm = qr.colsPermutation().indices();
  Mat<Scalar> pivot_block(d, d);
  entry.pivots.clear();
  for (Index k = 0; k < d; ++k) {
    entry.pivots.push_back(perm(k));
    pivot_block.col(k) = m.col(perm(k));
  }
  entry.pivot_condition = static_cast<double>(condition_number(pivot_block));
  if (!(entry.pivot_condition < threshold)) {
    entry.status = HeadFixStatus::RankDeficient;
    return Mat<Scalar>::Identity(d, d);
  }
  entry.status = HeadFixStatus::Fixed;
  return lu_inverse(pivot_block);
}

}  // namespace detail

/// Spends the head-space freedom: for every block and head, picks a
/// well-conditioned d_h-column block of K and of V and chooses h1, h3 so
/// that those blocks become the identity. Rotations stay at the identity.
/// Heads whose best pivot block is worse conditioned than `pivot_threshold`
/// are left untouched and reported as RankDeficient.
template <typename Scalar>
GaugeFixResult<Scalar> gauge_fix_heads(const WeightSet<Scalar>& w, const ModelConfig& config,
                                       double pivot_threshold = kPivotConditionThreshold) {
  validate_weights(w, config);
  GaugeFixResult<Scalar> result{w, identity_gauge<Scalar>(config), {}};
  result.report.d_h = config.d_h;
  result.report.pivot_threshold = pivot_threshold;
  auto& entries = result.report.entries;
  for (int b = 0; b < config.n_t; ++b) {
    for (int a = 0; a < config.n_h; ++a) {
      const auto bi = static_cast<std::size_t>(b), ai = static_cast<std::size_t>(a);
      HeadFixEntry k_entry{b, a, 'K'};
      result.gauge.h1[bi][ai] = detail::pivot_head_map(w.blocks[bi].K[ai], pivot_threshold, k_entry);
      HeadFixEntry v_entry{b, a, 'V'};
      result.gauge.h3[bi][ai] = detail::pivot_head_map(w.blocks[bi].V[ai], pivot_threshold, v_entry);
      entries.push_back(std::move(k_entry));
      entries.push_back(std::move(v_entry));
    }
  }
  result.weights = apply_gauge(w, result.gauge, config);

  // Record how close the computed blocks came to I, then store exact
  // identities: the eliminated parameters are constants, not weights.
  for (auto& e : entries) {
    if (e.status != HeadFixStatus::Fixed) continue;
    auto& blk = result.weights.blocks[static_cast<std::size_t>(e.block)];
    Mat<Scalar>& m = (e.matrix == 'K' ? blk.K : blk.V)[static_cast<std::size_t>(e.head)];
    double residual = 0.0;
    for (Index k = 0; k < config.d_h; ++k) {
      for (Index r = 0; r < config.d_h; ++r) {
        const Scalar want = r == k ? Scalar(1) : Scalar(0);
        residual = std::max(residual, static_cast<double>(std::abs(m(r, e.pivots[k]) - want)));
        m(r, e.pivots[k]) = want;
      }
    }
    e.identity_residual = residual;
  }
  return result;
}

}  // namespace tgauge
