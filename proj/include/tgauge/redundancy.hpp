#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace tgauge {

/// Dimension of the gauge group acting on a transformer stack:
/// 2 n_t n_h d_h^2 (two head maps per head per block) plus
/// (d_e-1)(d_e-2)/2 (one rotation fixing the all-ones vector).
/// Exact integer arithmetic; throws Overflow past 2^64 - 1.
std::uint64_t redundancy_count(std::uint64_t n_t, std::uint64_t n_h, std::uint64_t d_h,
                               std::uint64_t d_e);

/// The head-space part alone, 2 n_t n_h d_h^2.
std::uint64_t head_redundancy(std::uint64_t n_t, std::uint64_t n_h, std::uint64_t d_h);

/// Dimension of SO(d_e - 1), (d_e-1)(d_e-2)/2.
std::uint64_t rotation_redundancy(std::uint64_t d_e);

struct ModelPreset {
  std::string_view name;
  std::string_view display_name;
  std::uint64_t n_t, n_h, d_h, d_e;
  std::uint64_t total_parameters;  ///< as printed in the published comparison
};

/// gpt2, gpt2-xl, llama-65b. Dimensions are the published architecture
/// constants of each model; parameter totals are the commonly quoted sizes
/// (117M, 1.56B, 65.2B).
std::span<const ModelPreset> model_presets();
std::optional<ModelPreset> find_preset(std::string_view name);

struct RedundancyRow {
  std::string name;
  std::uint64_t n_t = 0, n_h = 0, d_h = 0, d_e = 0;
  std::uint64_t redundancy = 0;
  std::uint64_t total_parameters = 0;
  std::string percent;  ///< one decimal, round-half-even, e.g. "1.3"
  std::string compact;  ///< three significant digits, e.g. "11.1M"
};

RedundancyRow redundancy_report(const ModelPreset& preset);
RedundancyRow redundancy_report(std::uint64_t n_t, std::uint64_t n_h, std::uint64_t d_h,
                                std::uint64_t d_e, std::uint64_t total_parameters,
                                std::string name = "custom");

/// 100 * part / whole to one decimal, ties to even, computed exactly.
std::string percent_one_decimal(std::uint64_t part, std::uint64_t whole);

/// Three significant digits with a K/M/B/T suffix ("1.47M", "201M").
std::string compact_count(std::uint64_t n);

/// Parameter bookkeeping for the variant with rotations G, Gbar in both skip
/// connections. Each block gains two d_e x d_e matrices and two extra gauge
/// choices of dimension (d_e-1)(d_e-2)/2.
struct ExtendedBookkeeping {
  std::uint64_t added_dense_parameters;   ///< 2 n_t d_e^2 (G, Gbar stored densely)
  std::uint64_t added_group_parameters;   ///< 2 n_t (d_e-1)(d_e-2)/2 (G, Gbar as group elements)
  std::uint64_t added_gauge_dimensions;   ///< 2 n_t (d_e-1)(d_e-2)/2
  std::uint64_t net_dense() const { return added_dense_parameters - added_gauge_dimensions; }
  std::uint64_t net_group() const { return added_group_parameters - added_gauge_dimensions; }
};

ExtendedBookkeeping extended_bookkeeping(std::uint64_t n_t, std::uint64_t d_e);

}  // namespace tgauge
