#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "coeval/domain.hpp"

namespace coeval {

struct ExtractionResult {
  int score = 0;
  /// [span_begin, span_end) of the matched numeral in `normalized_text`.
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  std::string normalized_text;
  /// Names of the normalisation rules that changed the text, in order.
  std::vector<std::string> normalization_log;
};

/// Pulls an integer score out of free-form model text:
///   1. drop the first "2." step prefix (line-leading, not part of a decimal);
///   2. drop every "out of <max>" and "/<max>";
///   3. take the first number left.
/// Throws Error(no_score_found) when no number remains and Error(out_of_range)
/// when the number is outside the scale or not integral. Never clamps.
ExtractionResult extract_score(std::string_view raw, const ScoreScale& scale);

struct SplitEvaluation {
  std::string explanation;
  ExtractionResult extraction;
  /// Offset in the raw text where the score segment starts.
  std::size_t segment_begin = 0;
};

/// Splits a criterion-level response into (explanation, score). The score is
/// searched in the trailing segment that starts at the last step-2 line, or
/// failing that the last line mentioning "score", or else the whole text; the
/// explanation is what precedes it.
SplitEvaluation split_evaluation(std::string_view raw, const ScoreScale& scale);

}  // namespace coeval
