#pragma once

// Meta-evaluation statistics. Undefined results are std::nullopt; callers
// render them as "NaN".

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coeval/domain.hpp"

namespace coeval {

/// Pearson r. nullopt when either input has zero variance.
/// Throws Error(length_mismatch) or Error(too_few_points) (fewer than 2).
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Pearson on fractional ranks (ties get their average rank).
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// 1-based fractional ranks.
std::vector<double> fractional_ranks(std::span<const double> values);

// ---- score matrix ----------------------------------------------------------

enum class RaterKind { llm, hitl, human };

struct Rater {
  std::string id;
  RaterKind kind = RaterKind::human;
  friend bool operator==(const Rater&, const Rater&) = default;
};

/// raters x items grid of optional scores.
struct ScoreMatrix {
  std::vector<Rater> raters;
  std::vector<std::string> items;
  std::vector<std::vector<std::optional<int>>> cells;  // [rater][item]

  std::size_t add_rater(const Rater& rater);
  std::size_t add_item(const std::string& item);
  std::optional<std::size_t> rater_index(const std::string& id) const;
  std::optional<std::size_t> item_index(const std::string& item) const;
  /// Adds the rater and item if needed.
  void set(const Rater& rater, const std::string& item, int score);
  std::optional<int> get(std::size_t rater, std::size_t item) const { return cells[rater][item]; }

  /// Two-rater sub-matrix over the same items.
  ScoreMatrix pair(std::size_t a, std::size_t b) const;
  /// Only the given raters, same items.
  ScoreMatrix select(std::span<const std::size_t> rater_indices) const;

  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;
};

std::string_view to_string(RaterKind kind);
RaterKind parse_rater_kind(std::string_view s);

// ---- Krippendorff's alpha ------------------------------------------------

enum class AlphaMetric { interval, ordinal, nominal };

std::string_view to_string(AlphaMetric metric);
AlphaMetric parse_alpha_metric(std::string_view s);

struct AlphaResult {
  /// 1 - D_o / D_e. When D_e is zero every pairable value is identical; the
  /// value is then reported as 1.0 and `trivial` is set.
  std::optional<double> value;
  bool trivial = false;
  double observed_disagreement = 0.0;
  double expected_disagreement = 0.0;
  std::size_t pairable_values = 0;
};

/// Coincidence-matrix alpha; items with fewer than two ratings are ignored.
/// Throws Error(no_pairable_values) if no item has two ratings, and
/// Error(invalid_argument) with fewer than two raters.
AlphaResult krippendorff_alpha(const ScoreMatrix& m, AlphaMetric metric = AlphaMetric::interval);

struct PairAlpha {
  std::string rater_a;
  std::string rater_b;
  std::optional<double> alpha;
  bool high_agreement = false;
};

inline constexpr double kHighAgreementAlpha = 0.7;

/// Alpha for every rater pair; pairs without pairable values get nullopt.
std::vector<PairAlpha> pairwise_alpha(const ScoreMatrix& m, AlphaMetric metric = AlphaMetric::interval,
                                      double threshold = kHighAgreementAlpha);

// ---- distributions ---------------------------------------------------------

struct Histogram {
  std::string group;
  int min = 1;
  int max = 5;
  std::vector<std::string> labels;  // bin labels for categorical scales
  std::vector<std::size_t> counts;  // counts[score - min]
  std::vector<double> ratios;
  std::size_t total = 0;
};

Histogram make_histogram(std::string group, std::span<const int> scores, const ScoreScale& scale);

enum class GroupBy { source, criterion };

/// Overall scores grouped by sample source, or criterion scores grouped by
/// criterion. Groups appear in first-seen order. Throws invalid_argument on
/// empty input and out_of_range for scores outside the scale.
std::vector<Histogram> score_distribution(std::span<const SampleEvaluation> evals, GroupBy group_by, const Task& task,
                                          std::span<const Criterion> criteria,
                                          const ScoreScale& overall_scale = ScoreScale::likert5());

/// One histogram per rater over the matrix's present cells.
std::vector<Histogram> distribution_by_rater(const ScoreMatrix& m, const ScoreScale& scale);

// ---- behavior taxonomy -----------------------------------------------------

enum class Behavior { correction, scrutiny, subjectivity, outlier, agreement };

std::string_view to_string(Behavior b);

struct BehaviorThresholds {
  int conflict = 1;
  int disparity = 2;
};

struct BehaviorRecord {
  std::string item;
  int llm_score = 0;
  int hitl_final_score = 0;
  std::vector<int> human_eval_scores;
  int majority = 0;
  int disparity = 0;
  Behavior category = Behavior::agreement;
};

/// Most frequent score; ties go to the lower score.
int majority_vote(std::span<const int> scores);

/// First matching rule wins: correction, scrutiny, subjectivity, outlier,
/// otherwise agreement. Throws invalid_argument if `humans` is empty.
BehaviorRecord classify_behavior(int llm, int hitl, std::span<const int> humans, BehaviorThresholds thresholds = {},
                                 std::string item = {});

// ---- pairwise correlation --------------------------------------------------

enum class Pairing { llm_vs_humans, hitl_vs_humans, humans_vs_humans };

std::string_view to_string(Pairing p);

struct PairCorrelation {
  std::string rater_a;
  std::string rater_b;
  std::size_t n = 0;  // items both raters scored
  std::optional<double> pearson;
};

struct CorrelationSummary {
  Pairing pairing = Pairing::humans_vs_humans;
  std::optional<double> mean;  // over defined pairs
  std::size_t pairs = 0;
  std::size_t skipped = 0;  // undefined pairs
  std::vector<PairCorrelation> details;
};

/// Mean Pearson over all rater pairs of the pairing, on items both raters
/// scored. Throws Error(no_pairs) when the matrix has no such pair.
CorrelationSummary pairwise_correlation_report(const ScoreMatrix& m, Pairing pairing);

}  // namespace coeval
