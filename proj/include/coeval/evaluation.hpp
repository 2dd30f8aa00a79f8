#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "coeval/domain.hpp"
#include "coeval/gateway.hpp"
#include "coeval/prompts.hpp"

namespace coeval {

struct EvalOptions {
  std::string model;
  int max_output_tokens = 1024;
  double temperature = 0.0;
  ScoreScale overall_scale = ScoreScale::likert5();
};

/// Evaluation id shared by the draft and final versions of one sample.
std::string evaluation_id(const std::string& run_id, const std::string& sample_id);

/// One completion with the direct prompt; the overall score is extracted from
/// the whole response. Throws extraction or gateway errors.
SampleEvaluation evaluate_direct(Gateway& gateway, const PromptLibrary& prompts, const Task& task,
                                 const Sample& sample, const EvalOptions& options);

/// One completion per criterion (in set order), then one overall completion
/// carrying the accumulated history. A criterion whose score cannot be
/// extracted is re-asked once; a second failure leaves the cell missing.
/// Failing to extract the overall score throws.
SampleEvaluation evaluate_step_by_step(Gateway& gateway, const PromptLibrary& prompts, const Task& task,
                                       const Sample& sample, const CriteriaSet& criteria,
                                       const EvalOptions& options);

/// Applies edit_score / edit_explanation actions to a copy of `draft` and
/// returns the human_final version. Edited cells switch author to the
/// annotator. Throws Error(unknown_cell) and Error(score_out_of_scale).
SampleEvaluation human_finalize_evaluation(const SampleEvaluation& draft, std::span<const HumanAction> edits,
                                           const std::string& annotator, std::span<const Criterion> criteria,
                                           const ScoreScale& overall_scale = ScoreScale::likert5());

struct ProgressEvent {
  std::string run_id;
  std::string sample_id;
  SampleStatus status;
  std::size_t completed = 0;
  std::size_t total = 0;
};

struct SampleOutcome {
  std::size_t index = 0;
  std::string sample_id;
  SampleStatus status;
  std::optional<SampleEvaluation> evaluation;
};

struct BatchContext {
  Gateway& gateway;
  const PromptLibrary& prompts;
  const Task& task;
  const CriteriaSet* criteria = nullptr;  // required for step modes
  EvalOptions options;
  /// Called once per sample in sample order, whatever order samples finish in.
  std::function<void(const SampleOutcome&)> on_outcome;
  /// Called as samples finish (completion order).
  std::function<void(const ProgressEvent&)> on_progress;
};

/// Checks that `run` fits its criteria set: direct runs take none, step runs
/// need a finalized non-empty set of the same task.
void validate_run(const EvaluationRun& run, const CriteriaSet* criteria);

/// Evaluates every sample of a pending run with up to gateway.max_in_flight()
/// samples in flight. Per-sample failures become failed(reason) statuses.
/// Throws Error(already_run) unless every status is pending.
EvaluationRun run_batch(const EvaluationRun& run, BatchContext& context);

}  // namespace coeval
