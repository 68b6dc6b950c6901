#include "dopf/coupling.hpp"

#include <stdexcept>

namespace dopf {

Block zero_block(int rows, int cols) { return Block(rows, std::vector<double>(cols, 0.0)); }

FairnessMode parse_fairness(const std::string& s) {
  if (s == "none") return FairnessMode::kNone;
  if (s == "egalitarian") return FairnessMode::kEgalitarian;
  if (s == "proportional") return FairnessMode::kProportional;
  if (s == "uniform_dynamic" || s == "uniform") return FairnessMode::kUniformDynamic;
  throw std::invalid_argument("unknown fairness mode '" + s + "'");
}

std::string to_string(FairnessMode mode) {
  switch (mode) {
    case FairnessMode::kNone: return "none";
    case FairnessMode::kEgalitarian: return "egalitarian";
    case FairnessMode::kProportional: return "proportional";
    case FairnessMode::kUniformDynamic: return "uniform_dynamic";
  }
  return "unknown";
}

}  // namespace dopf
