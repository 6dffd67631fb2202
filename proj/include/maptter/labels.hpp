#pragma once

#include <array>
#include <string>
#include <string_view>

#include "maptter/error.hpp"

namespace maptter {

enum class Label { positive = 0, negative = 1, neutral = 2 };

inline constexpr std::array<Label, 3> kAllLabels{Label::positive, Label::negative, Label::neutral};

inline constexpr const char* to_string(Label label) {
  switch (label) {
    case Label::positive: return "positive";
    case Label::negative: return "negative";
    case Label::neutral: return "neutral";
  }
  return "?";
}

inline Label parse_label(std::string_view text) {
  if (text == "positive") return Label::positive;
  if (text == "negative") return Label::negative;
  if (text == "neutral") return Label::neutral;
  throw Error(Errc::parse_error, "unknown label '" + std::string(text) + "'");
}

/// Sign convention shared by every learner: positive -> +1, negative -> -1.
inline int label_sign(Label label) {
  if (label == Label::positive) return 1;
  if (label == Label::negative) return -1;
  throw Error(Errc::invalid_argument, "neutral has no polarity sign");
}

}  // namespace maptter
