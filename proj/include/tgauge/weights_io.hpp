#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "tgauge/gauge.hpp"

namespace tgauge {

using Json = nlohmann::json;

/// A weight file: the model configuration plus its weights.
///
/// Layout (all numbers are 64-bit floats, matrices are row-major nested
/// arrays):
///   { "config": { "d_e", "n_h", "d_h", "n_t", "n_c", "d_f", "extended",
///                 "attn_scale", "activation" },
///     "layers": [ { "Q": [head][row][col], "K": ..., "V": ..., "L": [[..]],
///                   "W": [[..]], "What": [[..]], "G"?: [[..]], "Gbar"?: [[..]] } ],
///     "U": [[..]] }
struct WeightFile {
  ModelConfig config;
  WeightSet<double> weights;
};

Json matrix_to_json(const MatrixXd& m);
Json config_to_json(const ModelConfig& c);
Json weights_to_json(const WeightSet<double>& w, const ModelConfig& c);

/// Parses and validates a weight document. Every schema problem found is
/// reported in one SchemaError. When `expect_extended` is set and the file's
/// mode differs, throws ModeMismatch.
WeightFile weights_from_json(const Json& doc, std::optional<bool> expect_extended = std::nullopt);
ModelConfig config_from_json(const Json& doc);

/// Text parsing; syntax errors raise ParseError naming line and column.
Json parse_json_text(std::string_view text, const std::string& source = "<input>");

WeightFile read_weight_file(const std::filesystem::path& path,
                            std::optional<bool> expect_extended = std::nullopt);
void write_weight_file(const std::filesystem::path& path, const WeightFile& file);

/// Gauge elements use the same conventions: "g0", "g4" are lists of
/// rotations, "h1", "h3" are indexed by block then head.
Json gauge_to_json(const GaugeElement<double>& g);
GaugeElement<double> gauge_from_json(const Json& doc);

/// Serialized form used for files and reports. Doubles are printed in the
/// shortest form that reads back to the same value.
std::string dump_json(const Json& doc, int indent = 1);

}  // namespace tgauge
