#include <gtest/gtest.h>

#include <fstream>

#include "coeval/error.hpp"
#include "coeval/score_extractor.hpp"
#include "test_support.hpp"

using namespace coeval;
using nlohmann::json;
namespace ts = testing_support;

namespace {

ScoreScale scale_for(int max) { return max == 3 ? ScoreScale::level3() : ScoreScale::likert5(); }

/// "4", "NoScoreFound" or "OutOfRange".
std::string outcome(const std::string& raw, int max) {
  try {
    return std::to_string(extract_score(raw, scale_for(max)).score);
  } catch (const Error& e) {
    return std::string(to_string(e.code()));
  }
}

}  // namespace

TEST(ScoreExtractor, CorpusPassesExactly) {
  std::ifstream in(ts::fixture("extraction_corpus.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    const auto expected = j.at("expected").is_number() ? std::to_string(j.at("expected").get<int>())
                                                       : j.at("expected").get<std::string>();
    EXPECT_EQ(outcome(j.at("raw"), j.at("scale_max")), expected) << j.dump();
    ++n;
  }
  EXPECT_GE(n, 40);
}

TEST(ScoreExtractor, SpanIndexesTheDigits) {
  const auto r = extract_score("2. I give 3 out of 5", ScoreScale::likert5());
  EXPECT_EQ(r.score, 3);
  EXPECT_EQ(r.normalized_text.substr(r.span_begin, r.span_end - r.span_begin), "3");
  EXPECT_EQ(r.normalization_log, (std::vector<std::string>{"strip_step_prefix", "strip_out_of_max"}));
}

TEST(ScoreExtractor, IdempotentOnMatchedSpan) {
  for (const char* raw : {"Score: 4", "2. 3 out of 5", "Rating 5/5", "**2.** Score: 1"}) {
    const auto r = extract_score(raw, ScoreScale::likert5());
    const auto digits = r.normalized_text.substr(r.span_begin, r.span_end - r.span_begin);
    EXPECT_EQ(extract_score(digits, ScoreScale::likert5()).score, r.score) << raw;
  }
}

TEST(ScoreExtractor, OutOfRangeCarriesTheValue) {
  try {
    extract_score("Score: 9", ScoreScale::likert5());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::out_of_range);
    EXPECT_EQ(e.details().at("value"), 9.0);
  }
}

TEST(ScoreExtractor, EmptyInputIsRejected) {
  EXPECT_THROW(extract_score("   ", ScoreScale::likert5()), Error);
}

TEST(SplitEvaluation, ScoreComesFromTheStepTwoSegment) {
  const std::string raw =
      "1. The output follows the 3 story beats and has 2 characters.\n"
      "2. Score: 4";
  const auto s = split_evaluation(raw, ScoreScale::likert5());
  EXPECT_EQ(s.extraction.score, 4);
  EXPECT_EQ(s.explanation, "The output follows the 3 story beats and has 2 characters.");
}

TEST(SplitEvaluation, FallsBackToLastScoreLine) {
  const auto s = split_evaluation("Explanation: covers 3 topics.\nScore: 5", ScoreScale::likert5());
  EXPECT_EQ(s.extraction.score, 5);
  EXPECT_EQ(s.explanation, "Explanation: covers 3 topics.");
}

TEST(SplitEvaluation, WholeTextWhenNoMarkers) {
  const auto s = split_evaluation("Pretty good overall, 4", ScoreScale::likert5());
  EXPECT_EQ(s.extraction.score, 4);
  EXPECT_EQ(s.segment_begin, 0u);
  EXPECT_EQ(s.explanation, "Pretty good overall,");
}

TEST(SplitEvaluation, MarkerWithoutNumberFallsThrough) {
  const auto s = split_evaluation("Score: see below\nI rate it 2 out of 5", ScoreScale::likert5());
  EXPECT_EQ(s.extraction.score, 2);
}

TEST(SplitEvaluation, NoNumberAnywhere) {
  try {
    split_evaluation("Fine.\nScore: excellent", ScoreScale::likert5());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_score_found);
  }
}
