#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tgauge/numerics.hpp"

namespace tgauge {

/// Elementwise nonlinearity of the feed-forward sublayer. Any elementwise
/// function keeps the gauge symmetry; relu is the default.
enum class Activation { Relu, Gelu, Tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct ModelConfig {
  int d_e = 16;  ///< embedding dimension
  int n_h = 2;   ///< heads per block
  int d_h = 4;   ///< head dimension
  int n_t = 3;   ///< transformer blocks
  int n_c = 8;   ///< context length (tokens per input)
  int d_f = 32;  ///< feed-forward hidden dimension
  bool extended = false;    ///< learnable rotations G, Gbar in both skip connections
  bool attn_scale = false;  ///< multiply attention scores by 1/sqrt(d_h)
  Activation activation = Activation::Relu;

  int concat_dim() const { return n_h * d_h; }

  /// Throws ShapeMismatch unless every dimension is >= 1 and d_e >= 3.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Weights of one transformer block. Per-head matrices are indexed by head.
template <typename Scalar>
struct BlockWeights {
  std::vector<Mat<Scalar>> Q;  ///< n_h x (d_h x d_e)
  std::vector<Mat<Scalar>> K;  ///< n_h x (d_h x d_e)
  std::vector<Mat<Scalar>> V;  ///< n_h x (d_h x d_e)
  Mat<Scalar> L;               ///< d_e x (n_h d_h)
  Mat<Scalar> W;               ///< d_f x d_e
  Mat<Scalar> W_hat;           ///< d_e x d_f
  std::optional<Mat<Scalar>> G;      ///< d_e x d_e, extended mode only
  std::optional<Mat<Scalar>> G_bar;  ///< d_e x d_e, extended mode only
};

template <typename Scalar>
struct WeightSet {
  std::vector<BlockWeights<Scalar>> blocks;
  Mat<Scalar> U;  ///< vocab x d_e unembedding

  Index vocab() const { return U.rows(); }
};

namespace detail {

inline void expect_shape(std::vector<std::string>& problems, const std::string& path, Index rows,
                         Index cols, Index want_rows, Index want_cols) {
  if (rows != want_rows || cols != want_cols)
    problems.push_back(path + ": expected " + std::to_string(want_rows) + "x" +
                       std::to_string(want_cols) + ", got " + std::to_string(rows) + "x" +
                       std::to_string(cols));
}

template <typename Scalar>
void expect_matrix(std::vector<std::string>& problems, const std::string& path,
                   const Mat<Scalar>& m, Index want_rows, Index want_cols) {
  expect_shape(problems, path, m.rows(), m.cols(), want_rows, want_cols);
  if (!m.allFinite()) problems.push_back(path + ": non-finite entry");
}

}  // namespace detail

/// Lists every inconsistency between `w` and `config`; empty when valid.
template <typename Scalar>
std::vector<std::string> weight_problems(const WeightSet<Scalar>& w, const ModelConfig& config) {
  std::vector<std::string> problems;
  if (static_cast<int>(w.blocks.size()) != config.n_t)
    problems.push_back("layers: expected " + std::to_string(config.n_t) + " blocks, got " +
                       std::to_string(w.blocks.size()));
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const auto& blk = w.blocks[b];
    const std::string base = "layers[" + std::to_string(b) + "]";
    const auto heads = [&](const std::vector<Mat<Scalar>>& ms, const char* name) {
      if (static_cast<int>(ms.size()) != config.n_h) {
        problems.push_back(base + "." + name + ": expected " + std::to_string(config.n_h) +
                           " heads, got " + std::to_string(ms.size()));
        return;
      }
      for (std::size_t a = 0; a < ms.size(); ++a)
        detail::expect_matrix(problems, base + "." + name + "[" + std::to_string(a) + "]", ms[a],
                              config.d_h, config.d_e);
    };
    heads(blk.Q, "Q");
    heads(blk.K, "K");
    heads(blk.V, "V");
    detail::expect_matrix(problems, base + ".L", blk.L, config.d_e, config.concat_dim());
    detail::expect_matrix(problems, base + ".W", blk.W, config.d_f, config.d_e);
    detail::expect_matrix(problems, base + ".What", blk.W_hat, config.d_e, config.d_f);
    for (const auto& [opt, name] : {std::pair{&blk.G, "G"}, std::pair{&blk.G_bar, "Gbar"}}) {
      if (config.extended && !opt->has_value())
        problems.push_back(base + "." + name + ": required in extended mode");
      else if (!config.extended && opt->has_value())
        problems.push_back(base + "." + name + ": not allowed in standard mode");
      else if (opt->has_value())
        detail::expect_matrix(problems, base + "." + name, **opt, config.d_e, config.d_e);
    }
  }
  if (w.U.cols() != config.d_e || w.U.rows() < 1)
    problems.push_back("U: expected vocab x " + std::to_string(config.d_e) + ", got " +
                       std::to_string(w.U.rows()) + "x" + std::to_string(w.U.cols()));
  else if (!w.U.allFinite())
    problems.push_back("U: non-finite entry");
  return problems;
}

template <typename Scalar>
void validate_weights(const WeightSet<Scalar>& w, const ModelConfig& config) {
  auto problems = weight_problems(w, config);
  if (problems.empty()) return;
  std::string msg = "weights do not match config:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw ShapeMismatch(msg);
}

template <typename Derived>
void validate_embeddings(const Eigen::MatrixBase<Derived>& e, const ModelConfig& config) {
  if (e.rows() != config.d_e || e.cols() != config.n_c)
    throw ShapeMismatch("embeddings: expected " + std::to_string(config.d_e) + "x" +
                        std::to_string(config.n_c) + ", got " + std::to_string(e.rows()) + "x" +
                        std::to_string(e.cols()));
  require_finite(e, "embeddings");
}

template <typename Derived>
Mat<typename Derived::Scalar> apply_activation(const Eigen::MatrixBase<Derived>& x,
                                               Activation act) {
  using Scalar = typename Derived::Scalar;
  switch (act) {
    case Activation::Relu:
      return x.cwiseMax(Scalar(0));
    case Activation::Tanh:
      return x.array().tanh().matrix();
    case Activation::Gelu: {
      const Scalar c = std::sqrt(Scalar(2) / Scalar(EIGEN_PI));
      auto a = x.array();
      return (Scalar(0.5) * a * (Scalar(1) + (c * (a + Scalar(0.044715) * a.cube())).tanh()))
          .matrix();
    }
  }
  throw Error("unknown activation");
}

/// Causal attention pattern of one head. `e_bar` is the layer-normalized
/// block input (d_e x n_c); entry (i, j) is softmax_j of
/// sum_{mu,A,sigma} Ebar(mu,i) Q(A,mu) K(A,sigma) Ebar(sigma,j) over j <= i.
template <typename DE, typename DQ, typename DK>
Mat<typename DE::Scalar> attention_matrix(const Eigen::MatrixBase<DE>& e_bar,
                                          const Eigen::MatrixBase<DQ>& q,
                                          const Eigen::MatrixBase<DK>& k, const ModelConfig& config) {
  using Scalar = typename DE::Scalar;
  Mat<Scalar> scores = (q * e_bar).transpose() * (k * e_bar);
  if (config.attn_scale) scores /= std::sqrt(Scalar(config.d_h));
  return masked_row_softmax(scores);
}

/// Concatenated head outputs, (n_h d_h) x n_c. Head a fills rows
/// [a d_h, (a+1) d_h).
template <typename Derived>
Mat<typename Derived::Scalar> attention_block(const Eigen::MatrixBase<Derived>& e_bar,
                                              const BlockWeights<typename Derived::Scalar>& blk,
                                              const ModelConfig& config) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> out(config.concat_dim(), e_bar.cols());
  for (int a = 0; a < config.n_h; ++a) {
    const Mat<Scalar> attn = attention_matrix(e_bar, blk.Q[a], blk.K[a], config);
    out.middleRows(Index(a) * config.d_h, config.d_h).noalias() =
        (blk.V[a] * e_bar) * attn.transpose();
  }
  return out;
}

/// One transformer block.
///   standard: Et = L Ehat + E,   out = What act(W LN(Et)) + Et
///   extended: Et = L Ehat + G E, out = What act(W LN(Et)) + Gbar Et
template <typename Derived>
Mat<typename Derived::Scalar> block_forward(const Eigen::MatrixBase<Derived>& e_in,
                                            const BlockWeights<typename Derived::Scalar>& blk,
                                            const ModelConfig& config) {
  using Scalar = typename Derived::Scalar;
  const Mat<Scalar> e_bar = layer_norm_columns(e_in);
  const Mat<Scalar> e_hat = attention_block(e_bar, blk, config);
  Mat<Scalar> e_tilde = blk.L * e_hat;
  if (config.extended)
    e_tilde.noalias() += *blk.G * e_in;
  else
    e_tilde += e_in;
  const Mat<Scalar> hidden = apply_activation(blk.W * layer_norm_columns(e_tilde), config.activation);
  Mat<Scalar> out = blk.W_hat * hidden;
  if (config.extended)
    out.noalias() += *blk.G_bar * e_tilde;
  else
    out += e_tilde;
  return out;
}

/// Runs all blocks in order. An empty stack returns its input.
template <typename Derived>
Mat<typename Derived::Scalar> stack_forward(const Eigen::MatrixBase<Derived>& e0,
                                            const WeightSet<typename Derived::Scalar>& w,
                                            const ModelConfig& config) {
  using Scalar = typename Derived::Scalar;
  validate_embeddings(e0, config);
  validate_weights(w, config);
  Mat<Scalar> e = e0;
  for (const auto& blk : w.blocks) e = block_forward(e, blk, config);
  require_finite(e, "stack_forward");
  return e;
}

/// vocab x n_c matrix; column i is the next-token distribution at position i.
template <typename DE, typename DU>
Mat<typename DE::Scalar> next_token_distribution(const Eigen::MatrixBase<DE>& e_final,
                                                 const Eigen::MatrixBase<DU>& u) {
  if (u.cols() != e_final.rows()) throw ShapeMismatch("next_token_distribution: U/E mismatch");
  return column_softmax(u * e_final);
}

/// Mean cross-entropy of the model's next-token distributions against
/// `targets` (one token index per position).
template <typename Derived>
typename Derived::Scalar surrogate_loss(const WeightSet<typename Derived::Scalar>& w,
                                        const Eigen::MatrixBase<Derived>& e0,
                                        const std::vector<int>& targets, const ModelConfig& config) {
  using Scalar = typename Derived::Scalar;
  using Mat = tgauge::Mat<Scalar>;
  if (static_cast<Index>(targets.size()) != e0.cols())
    throw ShapeMismatch("surrogate_loss: one target per position required");
  const Mat p = next_token_distribution(stack_forward(e0, w, config), w.U);
  Scalar total = 0;
  for (Index i = 0; i < p.cols(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= p.rows()) throw ShapeMismatch("surrogate_loss: target out of range");
    total -= std::log(p(t, i));
  }
  return total / Scalar(p.cols());
}

}  // namespace tgauge
