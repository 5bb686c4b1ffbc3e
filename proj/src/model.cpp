#include "tgauge/model.hpp"

namespace tgauge {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Gelu:
      return "gelu";
    case Activation::Tanh:
      return "tanh";
  }
  return "relu";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "gelu") return Activation::Gelu;
  if (name == "tanh") return Activation::Tanh;
  throw ParseError("unknown activation '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  std::string bad;
  const auto need = [&](bool ok, const char* what) {
    if (!ok) bad += std::string(bad.empty() ? "" : ", ") + what;
  };
  need(d_e >= 3, "d_e >= 3");
  need(n_h >= 1, "n_h >= 1");
  need(d_h >= 1, "d_h >= 1");
  need(n_t >= 0, "n_t >= 0");
  need(n_c >= 1, "n_c >= 1");
  need(d_f >= 1, "d_f >= 1");
  if (!bad.empty()) throw ShapeMismatch("invalid model config: requires " + bad);
}

}  // namespace tgauge
