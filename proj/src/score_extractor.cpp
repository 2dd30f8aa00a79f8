#include "coeval/score_extractor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

#include "coeval/error.hpp"
#include "coeval/text.hpp"

namespace coeval {

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

/// Position of a "2." that starts its line (after optional blanks and
/// markdown emphasis) and is not the start of a decimal like "2.5".
std::size_t find_step_prefix(std::string_view s, std::size_t from = 0) {
  for (auto pos = s.find("2.", from); pos != std::string_view::npos; pos = s.find("2.", pos + 1)) {
    if (pos + 2 < s.size() && is_digit(s[pos + 2])) continue;
    bool line_start = true;
    for (auto i = pos; i > 0; --i) {
      const char c = s[i - 1];
      if (c == '\n') break;
      if (c != ' ' && c != '\t' && c != '*' && c != '#') {
        line_start = false;
        break;
      }
    }
    if (line_start) return pos;
  }
  return std::string_view::npos;
}

std::size_t line_start_of(std::string_view s, std::size_t pos) {
  auto nl = s.rfind('\n', pos == 0 ? 0 : pos - 1);
  return (nl == std::string_view::npos || pos == 0) ? 0 : nl + 1;
}

}  // namespace

ExtractionResult extract_score(std::string_view raw, const ScoreScale& scale) {
  if (text::trim(raw).empty()) throw Error(Errc::invalid_argument, "score text is empty");

  ExtractionResult result;
  std::string work(raw);

  if (auto pos = find_step_prefix(work); pos != std::string::npos) {
    work.erase(pos, 2);
    result.normalization_log.emplace_back("strip_step_prefix");
  }

  const auto max = std::to_string(scale.max);
  const std::regex out_of("out\\s+of\\s+" + max + "(?![0-9])", std::regex::icase);
  if (std::regex_search(work, out_of)) {
    work = std::regex_replace(work, out_of, "");
    result.normalization_log.emplace_back("strip_out_of_max");
  }
  const std::regex slash("/\\s*" + max + "(?![0-9])");
  if (std::regex_search(work, slash)) {
    work = std::regex_replace(work, slash, "");
    result.normalization_log.emplace_back("strip_slash_max");
  }

  static const std::regex number("[0-9]+(?:\\.[0-9]+)?");
  std::smatch m;
  if (!std::regex_search(work, m, number))
    throw Error(Errc::no_score_found, "no number in evaluation text", {{"normalized", work}});

  const std::string numeral = m.str();
  const double value = std::stod(numeral);
  const double integral = std::floor(value);
  if (value != integral || value < scale.min || value > scale.max) {
    throw Error(Errc::out_of_range, "score " + numeral + " outside " + std::to_string(scale.min) + ".." + max,
                {{"value", value}, {"text", numeral}});
  }
  result.score = static_cast<int>(integral);
  result.span_begin = static_cast<std::size_t>(m.position());
  result.span_end = result.span_begin + numeral.size();
  result.normalized_text = std::move(work);
  return result;
}

SplitEvaluation split_evaluation(std::string_view raw, const ScoreScale& scale) {
  // Candidate segment starts, most specific first. A candidate without any
  // number falls through to the next one; out-of-range scores do not.
  std::vector<std::size_t> candidates;
  std::size_t last_step = std::string_view::npos;
  for (auto pos = find_step_prefix(raw); pos != std::string_view::npos; pos = find_step_prefix(raw, pos + 1))
    last_step = pos;
  if (last_step != std::string_view::npos) candidates.push_back(line_start_of(raw, last_step));
  const auto lower = text::to_lower(raw);
  for (auto pos = lower.rfind("score"); pos != std::string::npos; pos = pos == 0 ? std::string::npos : lower.rfind("score", pos - 1)) {
    const auto start = line_start_of(raw, pos);
    if (std::find(candidates.begin(), candidates.end(), start) == candidates.end()) candidates.push_back(start);
  }
  if (std::find(candidates.begin(), candidates.end(), 0) == candidates.end()) candidates.push_back(0);

  SplitEvaluation out;
  std::size_t segment = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    segment = candidates[i];
    try {
      out.extraction = extract_score(raw.substr(segment), scale);
      break;
    } catch (const Error& e) {
      if (e.code() != Errc::no_score_found || i + 1 == candidates.size()) throw;
    }
  }
  out.segment_begin = segment;

  std::string explanation = text::trim(raw.substr(0, segment));
  if (explanation.empty())
    explanation = text::trim(std::string_view(out.extraction.normalized_text).substr(0, out.extraction.span_begin));
  if (explanation.rfind("1.", 0) == 0 && (explanation.size() == 2 || !is_digit(explanation[2])))
    explanation = text::trim(std::string_view(explanation).substr(2));
  out.explanation = std::move(explanation);
  return out;
}

}  // namespace coeval
