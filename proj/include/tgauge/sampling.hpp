#pragma once

#include <vector>

#include "tgauge/gauge.hpp"

namespace tgauge {

/// Random weights with i.i.d. Gaussian entries scaled by 1/sqrt(fan-in).
/// In extended mode G and Gbar are random rotations fixing the all-ones
/// vector, i.e. elements of the group they transform under.
template <typename Scalar = double>
WeightSet<Scalar> sample_weights(const ModelConfig& config, Index vocab, RngStream& rng) {
  config.validate();
  if (vocab < 1) throw ShapeMismatch("sample_weights: vocab must be >= 1");
  const auto fan = [](int n) { return Scalar(1) / std::sqrt(Scalar(n)); };
  WeightSet<Scalar> w;
  w.blocks.resize(static_cast<std::size_t>(config.n_t));
  for (auto& blk : w.blocks) {
    for (int a = 0; a < config.n_h; ++a) {
      blk.Q.push_back(sample_gaussian<Scalar>(config.d_h, config.d_e, rng, fan(config.d_e)));
      blk.K.push_back(sample_gaussian<Scalar>(config.d_h, config.d_e, rng, fan(config.d_e)));
      blk.V.push_back(sample_gaussian<Scalar>(config.d_h, config.d_e, rng, fan(config.d_e)));
    }
    blk.L = sample_gaussian<Scalar>(config.d_e, config.concat_dim(), rng, fan(config.concat_dim()));
    blk.W = sample_gaussian<Scalar>(config.d_f, config.d_e, rng, fan(config.d_e));
    blk.W_hat = sample_gaussian<Scalar>(config.d_e, config.d_f, rng, fan(config.d_f));
    if (config.extended) {
      blk.G = sample_ones_fixing_rotation<Scalar>(config.d_e, rng);
      blk.G_bar = sample_ones_fixing_rotation<Scalar>(config.d_e, rng);
    }
  }
  w.U = sample_gaussian<Scalar>(vocab, config.d_e, rng, fan(config.d_e));
  return w;
}

/// d_e x n_c embeddings with unit-variance Gaussian entries.
template <typename Scalar = double>
Mat<Scalar> sample_embeddings(const ModelConfig& config, RngStream& rng) {
  return sample_gaussian<Scalar>(config.d_e, config.n_c, rng);
}

inline std::vector<int> sample_targets(const ModelConfig& config, Index vocab, RngStream& rng) {
  std::vector<int> t(static_cast<std::size_t>(config.n_c));
  for (auto& x : t) x = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
  return t;
}

}  // namespace tgauge
