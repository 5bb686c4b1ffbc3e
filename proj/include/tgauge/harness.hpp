#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tgauge/weights_io.hpp"

namespace tgauge {

inline constexpr int kTrialRetryBudget = 16;
inline constexpr double kNegativeControlThreshold = 1e-3;

struct TrialSpec {
  ModelConfig config;
  int trials = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-10;
  double condition_bound = kDefaultMaxCondition;
  Index vocab = 32;
  bool identity_gauge = false;    ///< use the group identity instead of a random element
  bool negative_control = true;   ///< also run each trial with an unconstrained rotation

  void validate() const;
};

struct TrialResult {
  int index = 0;
  double max_rel_dev = 0.0;            ///< output distributions, gauged vs original
  double loss_abs_dev = 0.0;           ///< |loss(gauged) - loss(original)|
  double negative_control_dev = 0.0;   ///< same comparison with an unconstrained rotation
  int retries = 0;                     ///< degenerate draws discarded before this trial
};

struct VerificationReport {
  TrialSpec spec;
  std::vector<TrialResult> trials;
  double aggregate_max_rel_dev = 0.0;
  double aggregate_loss_abs_dev = 0.0;
  int negative_control_exceeding = 0;  ///< trials whose control deviation > threshold
  double negative_control_min_dev = 0.0;
  int total_retries = 0;
  bool pass = false;  ///< aggregate_max_rel_dev < spec.tolerance
};

/// Samples weights, inputs, targets and a gauge element per trial, and
/// compares next-token distributions before and after the transformation.
/// Trial i draws from RngStream(seed, i). Deterministic for a fixed spec.
VerificationReport run_invariance(const TrialSpec& spec);

struct FlatnessRow {
  double eps = 0.0;
  double gauge_loss_dev = 0.0;     ///< |loss(exp(eps X) . w) - loss(w)|
  double contrast_loss_dev = 0.0;  ///< |loss(w + eps D) - loss(w)|, D a unit random direction
};

struct FlatnessReport {
  TrialSpec spec;
  double base_loss = 0.0;
  std::vector<FlatnessRow> rows;
  /// contrast_dev[k+1] / contrast_dev[k] for consecutive nonzero eps.
  std::vector<double> contrast_ratios;
  bool gauge_flat = false;          ///< every gauge deviation < spec.tolerance
  bool contrast_first_order = false;  ///< each ratio within [0.5, 2] x eps ratio
  bool pass = false;
};

/// Walks along one-parameter subgroups exp(eps X) of the gauge group and,
/// for contrast, along a random straight line in weight space.
FlatnessReport run_flatness(const TrialSpec& spec, std::span<const double> eps);

/// Random generator of the all-ones-fixing rotation algebra: B S B^T with S
/// antisymmetric Gaussian.
MatrixXd sample_rotation_generator(Index d, RngStream& rng);

/// exp(eps X) for each generator of a gauge "direction".
struct GaugeDirection {
  std::vector<MatrixXd> x0, x4;
  std::vector<std::vector<MatrixXd>> y1, y3;
};
GaugeDirection sample_gauge_direction(const ModelConfig& config, RngStream& rng);
GaugeElement<double> gauge_step(const GaugeDirection& dir, double eps);

struct GaugeFixRun {
  ModelConfig config;
  GaugeFixReport report;
  GaugeElement<double> gauge;
  int checks = 0;
  double max_output_dev = 0.0;
  double tolerance = 1e-10;
  bool pass = false;
};

/// Reads a weight file, fixes the head gauge, writes the result, and checks
/// the fixed model against the original on `checks` random inputs.
GaugeFixRun run_gauge_fix(const std::filesystem::path& in, const std::filesystem::path& out,
                          std::uint64_t seed = 0, int checks = 10, double tolerance = 1e-10);

Json to_json(const TrialSpec& spec);
Json to_json(const VerificationReport& r);
Json to_json(const FlatnessReport& r);
Json to_json(const GaugeFixReport& r);
Json to_json(const GaugeFixRun& r);

}  // namespace tgauge
