#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coeval/domain.hpp"
#include "coeval/gateway.hpp"
#include "coeval/prompts.hpp"

namespace coeval {

/// Splits an LLM-written criteria list into criteria. Items start at "1." /
/// "1)" / "-" / "*" / "•" markers; an item's text splits on the first ':'
/// into name and statement, otherwise the name is its first five words.
/// Header items ("General criteria:") are dropped, deeper-indented bullets
/// under a real item are folded into it, and repeated names get " #2", " #3".
/// Throws Error(no_list_detected) when nothing parses.
std::vector<Criterion> parse_criteria_list(std::string_view raw);

struct DraftOptions {
  std::string model;
  int n_samples = 10;
  double sample_temperature = 0.7;
  int max_output_tokens = 1024;
};

struct DraftResult {
  CriteriaSet deterministic;
  std::vector<CriteriaSet> sampled;
};

/// One temperature-0 completion plus `n_samples` completions at the sampling
/// temperature, issued concurrently through the gateway. Set ids are
/// "<batch>-det" and "<batch>-s<k>"; the k-th sampling carries seed hint k.
/// Any failed call or unparseable list fails the whole batch.
DraftResult draft_criteria(Gateway& gateway, const PromptLibrary& prompts, const Task& task,
                           const std::string& batch_id, const DraftOptions& options);

// ---- consistency -------------------------------------------------------

using EmbeddedSet = std::vector<EmbeddingVector>;

struct PairDetail {
  std::string from;
  std::string to;
  double mean_matched_similarity = 0.0;
  friend bool operator==(const PairDetail&, const PairDetail&) = default;
};

/// Mean over deterministic criteria and sampled sets of the best cosine match
/// in each sampled set.
double criteria_consistency(const EmbeddedSet& deterministic, std::span<const EmbeddedSet> sampled,
                            std::vector<double>* per_set_means = nullptr);

/// Best-match similarity summed over every ordered pair of distinct sampled
/// sets, divided by sum(|C_m|) * (N - 1).
double inter_criteria_consistency(std::span<const EmbeddedSet> sampled,
                                  std::vector<std::vector<double>>* pair_means = nullptr);

struct ConsistencyReport {
  std::optional<double> cc;
  std::optional<double> icc;
  int n_samples = 0;
  std::vector<PairDetail> per_pair_details;
  friend bool operator==(const ConsistencyReport&, const ConsistencyReport&) = default;
};

/// Embeds every criterion as "name: statement" and computes both metrics.
/// Throws Error(empty_set) for empty sets; CC needs at least one sampled set.
double criteria_consistency(Gateway& gateway, const CriteriaSet& deterministic,
                            std::span<const CriteriaSet> sampled);
double inter_criteria_consistency(Gateway& gateway, std::span<const CriteriaSet> sampled);

/// Both metrics where defined (ICC requires two sampled sets).
ConsistencyReport consistency_report(Gateway& gateway, const CriteriaSet& deterministic,
                                     std::span<const CriteriaSet> sampled);

/// Unweighted mean of per-task CC and ICC; undefined entries are skipped.
ConsistencyReport mean_consistency(std::span<const ConsistencyReport> reports);

// ---- alignment -----------------------------------------------------------

struct AlignmentCounts {
  int approval = 0;
  int need_to_improve = 0;
  int deletion = 0;
  int missing = 0;
  int total() const noexcept { return approval + need_to_improve + deletion + missing; }
};

struct AlignmentRates {
  double approval = 0.0;
  double need_to_improve = 0.0;
  double deletion = 0.0;
  double missing = 0.0;
  AlignmentCounts counts;
};

/// Replays `audit` over the set's drafted criteria, checks the result against
/// `final_set`, then classifies each criterion by its final disposition:
/// approved, revised, deleted (LLM-drafted) or human-added (missing).
/// Throws Error(audit_replay_mismatch) if the replay disagrees.
AlignmentRates alignment_rates(const CriteriaSet& final_set, std::span<const HumanAction> audit);

AlignmentRates rates_from_counts(const AlignmentCounts& counts);

}  // namespace coeval
