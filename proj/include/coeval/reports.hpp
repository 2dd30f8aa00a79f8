#pragma once

// Report assembly shared by the CLI and the HTTP service: score matrices from
// project state, JSON payloads, aligned text tables and CSV files.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "coeval/state.hpp"
#include "coeval/stats.hpp"

namespace coeval {

enum class ReportKind { correlations, agreement, distribution, behavior };

std::string_view to_string(ReportKind kind);
ReportKind parse_report_kind(std::string_view s);

enum class ItemScope { overall, criteria, all };

/// Rater "llm" holds the run's LLM drafts, "hitl" the human-final versions,
/// and every imported human rater keeps its own id. Items are
/// "<sample>/<criterion id>" and "<sample>/overall".
ScoreMatrix build_score_matrix(const State& state, const std::string& run_id, ItemScope scope);

struct ReportOptions {
  /// Defaults to nominal when every criterion is categorical, else interval.
  std::optional<AlphaMetric> metric;
  BehaviorThresholds thresholds;
  double high_agreement = kHighAgreementAlpha;
};

nlohmann::json compute_report(const State& state, const std::string& run_id, ReportKind kind,
                              const ReportOptions& options = {});

/// Plain-text table of a report payload.
std::string render_report_table(ReportKind kind, const nlohmann::json& report);

/// (file name, CSV content) pairs for a report payload.
std::vector<std::pair<std::string, std::string>> report_csv_files(ReportKind kind, const nlohmann::json& report);

/// CC / ICC per batch plus their unweighted mean.
std::string render_consistency_table(const std::vector<DraftBatch>& batches);
/// Approval / need-to-improve / deletion / missing percentages per set.
std::string render_alignment_table(const std::vector<std::pair<std::string, AlignmentRates>>& rows);

/// Column-aligned text table; the first row is the header.
std::string format_table(const std::vector<std::vector<std::string>>& rows);

/// Fixed-precision number, or "NaN" for undefined values.
std::string format_number(const std::optional<double>& v, int precision = 2);
std::string format_number(const nlohmann::json& v, int precision = 2);

nlohmann::json to_json_value(const Histogram& h);

}  // namespace coeval
