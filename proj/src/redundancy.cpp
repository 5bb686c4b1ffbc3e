#include "tgauge/redundancy.hpp"

#include <array>
#include <limits>

#include "tgauge/errors.hpp"

namespace tgauge {

namespace {

using u128 = unsigned __int128;

std::uint64_t narrow(u128 v, const char* what) {
  if (v > std::numeric_limits<std::uint64_t>::max())
    throw Overflow(std::string(what) + ": result exceeds 64 bits");
  return static_cast<std::uint64_t>(v);
}

u128 checked_mul(u128 a, u128 b, const char* what) {
  if (a != 0 && b > std::numeric_limits<u128>::max() / a) throw Overflow(std::string(what) + ": overflow");
  return a * b;
}

void require_positive(std::initializer_list<std::uint64_t> args, const char* what) {
  for (auto v : args)
    if (v < 1) throw ShapeMismatch(std::string(what) + ": all arguments must be >= 1");
}

constexpr std::array<ModelPreset, 3> kPresets{{
    {"gpt2", "gpt2", 12, 12, 64, 768, 117'000'000ULL},
    {"gpt2-xl", "gpt2-XL", 48, 25, 64, 1600, 1'560'000'000ULL},
    {"llama-65b", "LLaMA", 80, 64, 128, 8192, 65'200'000'000ULL},
}};

}  // namespace

std::uint64_t head_redundancy(std::uint64_t n_t, std::uint64_t n_h, std::uint64_t d_h) {
  require_positive({n_t, n_h, d_h}, "head_redundancy");
  u128 v = checked_mul(2, n_t, "head_redundancy");
  v = checked_mul(v, n_h, "head_redundancy");
  v = checked_mul(v, d_h, "head_redundancy");
  v = checked_mul(v, d_h, "head_redundancy");
  return narrow(v, "head_redundancy");
}

std::uint64_t rotation_redundancy(std::uint64_t d_e) {
  require_positive({d_e}, "rotation_redundancy");
  if (d_e < 3) return 0;
  return narrow(checked_mul(d_e - 1, d_e - 2, "rotation_redundancy") / 2, "rotation_redundancy");
}

std::uint64_t redundancy_count(std::uint64_t n_t, std::uint64_t n_h, std::uint64_t d_h,
                               std::uint64_t d_e) {
  require_positive({n_t, n_h, d_h, d_e}, "redundancy_count");
  const u128 total = u128(head_redundancy(n_t, n_h, d_h)) + rotation_redundancy(d_e);
  return narrow(total, "redundancy_count");
}

std::span<const ModelPreset> model_presets() { return kPresets; }

std::optional<ModelPreset> find_preset(std::string_view name) {
  for (const auto& p : kPresets)
    if (p.name == name) return p;
  return std::nullopt;
}

std::string percent_one_decimal(std::uint64_t part, std::uint64_t whole) {
  if (whole == 0) throw ShapeMismatch("percent_one_decimal: total parameter count must be > 0");
  // tenths of a percent = 1000 * part / whole
  const u128 scaled = checked_mul(part, 1000, "percent_one_decimal");
  u128 tenths = scaled / whole;
  const u128 rem = scaled % whole;
  const u128 twice = rem * 2;
  if (twice > whole || (twice == whole && (tenths & 1) == 1)) ++tenths;
  const auto t = static_cast<std::uint64_t>(tenths);
  return std::to_string(t / 10) + "." + std::to_string(t % 10);
}

std::string compact_count(std::uint64_t n) {
  static constexpr std::array<std::pair<std::uint64_t, char>, 4> kUnits{
      {{1'000'000'000'000ULL, 'T'}, {1'000'000'000ULL, 'B'}, {1'000'000ULL, 'M'}, {1'000ULL, 'K'}}};
  for (const auto& [unit, suffix] : kUnits) {
    if (n < unit) continue;
    // Round to three significant digits, half up, in integer arithmetic.
    std::uint64_t whole = n / unit;
    int decimals = whole >= 100 ? 0 : whole >= 10 ? 1 : 2;
    std::uint64_t pow10 = decimals == 0 ? 1 : decimals == 1 ? 10 : 100;
    const u128 scaled = (u128(n) * pow10 * 2 + unit) / (u128(unit) * 2);
    auto value = static_cast<std::uint64_t>(scaled);
    if (value >= 1000 && decimals > 0) {  // 9.995M -> 10.0M
      --decimals;
      pow10 /= 10;
      value = static_cast<std::uint64_t>((u128(n) * pow10 * 2 + unit) / (u128(unit) * 2));
    }
    std::string out = std::to_string(value / pow10);
    if (decimals > 0) {
      std::string frac = std::to_string(value % pow10);
      frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
      out += "." + frac;
    }
    return out + suffix;
  }
  return std::to_string(n);
}

RedundancyRow redundancy_report(std::uint64_t n_t, std::uint64_t n_h, std::uint64_t d_h,
                                std::uint64_t d_e, std::uint64_t total_parameters,
                                std::string name) {
  RedundancyRow row;
  row.name = std::move(name);
  row.n_t = n_t;
  row.n_h = n_h;
  row.d_h = d_h;
  row.d_e = d_e;
  row.redundancy = redundancy_count(n_t, n_h, d_h, d_e);
  row.total_parameters = total_parameters;
  row.percent = percent_one_decimal(row.redundancy, total_parameters);
  row.compact = compact_count(row.redundancy);
  return row;
}

RedundancyRow redundancy_report(const ModelPreset& p) {
  return redundancy_report(p.n_t, p.n_h, p.d_h, p.d_e, p.total_parameters,
                           std::string(p.display_name));
}

ExtendedBookkeeping extended_bookkeeping(std::uint64_t n_t, std::uint64_t d_e) {
  require_positive({n_t, d_e}, "extended_bookkeeping");
  ExtendedBookkeeping b{};
  b.added_dense_parameters =
      narrow(checked_mul(checked_mul(2, n_t, "extended_bookkeeping"), u128(d_e) * d_e,
                         "extended_bookkeeping"),
             "extended_bookkeeping");
  b.added_gauge_dimensions =
      narrow(checked_mul(2 * u128(n_t), rotation_redundancy(d_e), "extended_bookkeeping"),
             "extended_bookkeeping");
  b.added_group_parameters = b.added_gauge_dimensions;
  return b;
}

}  // namespace tgauge
