#pragma once

// Core data model for the criteria-drafting / human-scrutiny pipeline.
// Values only: no I/O and no model calls happen here.

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coeval/clock.hpp"

namespace coeval {

enum class ScaleKind { likert5, level3, categorical3 };

struct ScoreScale {
  ScaleKind kind = ScaleKind::likert5;
  int min = 1;
  int max = 5;
  std::vector<std::string> labels;

  static ScoreScale likert5();
  static ScoreScale level3();
  /// Defaults to the math-solution labels: correct solution / one error
  /// exists / multiple errors exist.
  static ScoreScale categorical3(std::vector<std::string> labels = {});

  bool contains(int score) const noexcept { return score >= min && score <= max; }
  void validate() const;

  friend bool operator==(const ScoreScale&, const ScoreScale&) = default;
};

struct SampleSource {
  enum class Kind { model, human_reference };
  Kind kind = Kind::human_reference;
  std::string tag;  // model name when kind == model

  static SampleSource model(std::string tag) { return {Kind::model, std::move(tag)}; }
  static SampleSource human_reference() { return {Kind::human_reference, {}}; }

  /// Grouping label: the model tag, or "human_reference".
  std::string label() const { return kind == Kind::model ? tag : "human_reference"; }

  friend bool operator==(const SampleSource&, const SampleSource&) = default;
};

struct Sample {
  std::string id;
  std::string input;
  std::string output;
  SampleSource source;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Task {
  std::string id;
  std::string description;
  std::string demo_input;
  std::string demo_output;
  std::vector<Sample> samples;

  /// Throws Error(invalid_argument) on empty description, empty sample text or
  /// duplicate sample ids.
  void validate() const;
  const Sample* find_sample(const std::string& sample_id) const;

  friend bool operator==(const Task&, const Task&) = default;
};

enum class CriterionOrigin { llm_generated, human_added };
enum class CriterionStatus { draft, approved, revised, deleted };

struct Criterion {
  std::string id;
  std::string name;
  std::string statement;
  ScoreScale scale;
  CriterionOrigin origin = CriterionOrigin::llm_generated;
  CriterionStatus status = CriterionStatus::draft;

  /// "name: statement". This is the text that gets embedded and shown to the
  /// evaluator model.
  std::string text() const;
  bool active() const noexcept {
    return status == CriterionStatus::approved || status == CriterionStatus::revised;
  }

  friend bool operator==(const Criterion&, const Criterion&) = default;
};

struct Provenance {
  enum class Kind { deterministic_draft, sampled_draft, finalized };
  Kind kind = Kind::deterministic_draft;
  int index = 0;  // sampling index for sampled_draft

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// ---- human actions ---------------------------------------------------------

struct CriterionRef {
  std::string criterion_id;
  friend bool operator==(const CriterionRef&, const CriterionRef&) = default;
};
struct CellRef {
  std::string sample_id;
  std::string criterion_id;
  friend bool operator==(const CellRef&, const CellRef&) = default;
};
struct OverallRef {
  std::string sample_id;
  friend bool operator==(const OverallRef&, const OverallRef&) = default;
};
/// std::monostate is the target of an `add` action.
using ActionTarget = std::variant<std::monostate, CriterionRef, CellRef, OverallRef>;

namespace action {
struct Approve {
  friend bool operator==(const Approve&, const Approve&) = default;
};
struct NeedToImprove {
  std::string new_statement;
  friend bool operator==(const NeedToImprove&, const NeedToImprove&) = default;
};
struct Delete {
  friend bool operator==(const Delete&, const Delete&) = default;
};
struct Add {
  std::string name;
  std::string statement;
  ScoreScale scale;
  friend bool operator==(const Add&, const Add&) = default;
};
struct EditScore {
  int new_score = 0;
  friend bool operator==(const EditScore&, const EditScore&) = default;
};
struct EditExplanation {
  std::string new_text;
  friend bool operator==(const EditExplanation&, const EditExplanation&) = default;
};
}  // namespace action

using ActionKind = std::variant<action::Approve, action::NeedToImprove, action::Delete, action::Add,
                                action::EditScore, action::EditExplanation>;

struct HumanAction {
  std::string actor;
  ActionTarget target;
  ActionKind kind;
  Timestamp timestamp{};

  static HumanAction approve(std::string actor, std::string criterion_id, Timestamp ts = {});
  static HumanAction need_to_improve(std::string actor, std::string criterion_id, std::string statement,
                                     Timestamp ts = {});
  static HumanAction remove(std::string actor, std::string criterion_id, Timestamp ts = {});
  static HumanAction add(std::string actor, std::string name, std::string statement,
                         ScoreScale scale = ScoreScale::likert5(), Timestamp ts = {});
  static HumanAction edit_score(std::string actor, ActionTarget cell, int score, Timestamp ts = {});
  static HumanAction edit_explanation(std::string actor, ActionTarget cell, std::string text, Timestamp ts = {});

  friend bool operator==(const HumanAction&, const HumanAction&) = default;
};

std::string_view action_name(const ActionKind& kind);

// ---- criteria sets ---------------------------------------------------------

struct CriteriaSet {
  std::string id;
  std::string task_id;
  std::vector<Criterion> criteria;
  Provenance provenance;
  double temperature = 0.0;
  /// Criteria exactly as drafted, and the provenance they were drafted under.
  /// Together with `audit` they are the source of truth for this set.
  std::vector<Criterion> initial;
  Provenance drafted_as;
  std::vector<HumanAction> audit;

  bool finalized() const noexcept { return provenance.kind == Provenance::Kind::finalized; }
  const Criterion* find(const std::string& criterion_id) const;

  friend bool operator==(const CriteriaSet&, const CriteriaSet&) = default;
};

/// Builds a draft set whose `initial` snapshot equals `criteria`. Criterion ids
/// are rewritten to "<set id>-c<k>"; status is forced to draft.
CriteriaSet make_draft_set(std::string id, std::string task_id, std::vector<Criterion> criteria,
                           Provenance provenance, double temperature);

/// Applies one criteria-level action (approve / need_to_improve / delete /
/// add) and appends it to the audit list. Other criteria are untouched.
CriteriaSet apply_action(const CriteriaSet& set, const HumanAction& action);

/// Keeps approved and revised criteria in order and marks the set finalized.
CriteriaSet finalize(const CriteriaSet& set);

/// Re-applies `set.audit` to `set.initial`; finalizes the result if `set` is
/// finalized.
CriteriaSet replay_audit(const CriteriaSet& set);

// ---- evaluations -----------------------------------------------------------

struct Author {
  enum class Kind { llm, annotator };
  Kind kind = Kind::llm;
  std::string annotator_id;

  static Author llm() { return {}; }
  static Author annotator(std::string id) { return {Kind::annotator, std::move(id)}; }
  friend bool operator==(const Author&, const Author&) = default;
};

struct CriterionEvaluation {
  std::string criterion_id;
  std::string explanation;
  int score = 0;
  Author author;
  std::optional<std::string> raw_llm_text;

  friend bool operator==(const CriterionEvaluation&, const CriterionEvaluation&) = default;
};

enum class EvalMode { direct, step_by_step, step_by_step_human };

struct EvalVersion {
  enum class Kind { llm_draft, human_final };
  Kind kind = Kind::llm_draft;
  std::string annotator_id;

  static EvalVersion llm_draft() { return {}; }
  static EvalVersion human_final(std::string annotator) { return {Kind::human_final, std::move(annotator)}; }
  friend bool operator==(const EvalVersion&, const EvalVersion&) = default;
};

struct SampleEvaluation {
  std::string id;
  std::string run_id;
  std::string sample_id;
  std::vector<CriterionEvaluation> criterion_evals;
  /// Criteria whose score could not be extracted after the re-prompt.
  std::vector<std::string> missing_criteria;
  int overall_score = 0;
  std::string overall_explanation;
  std::optional<std::string> overall_raw;
  EvalMode mode = EvalMode::direct;
  EvalVersion version;
  /// Edits that produced a human_final version from its draft.
  std::vector<HumanAction> edits;

  const CriterionEvaluation* find(const std::string& criterion_id) const;

  friend bool operator==(const SampleEvaluation&, const SampleEvaluation&) = default;
};

enum class SampleState { pending, llm_drafted, human_finalized, failed };

struct SampleStatus {
  SampleState state = SampleState::pending;
  std::string reason;  // failure reason code
  friend bool operator==(const SampleStatus&, const SampleStatus&) = default;
};

struct EvaluationRun {
  std::string id;
  std::string task_id;
  std::optional<std::string> criteria_set_id;
  EvalMode mode = EvalMode::direct;
  std::vector<std::string> sample_ids;
  std::vector<SampleStatus> statuses;

  bool all_pending() const;
  friend bool operator==(const EvaluationRun&, const EvaluationRun&) = default;
};

// enum names used in JSON and tables
std::string_view to_string(ScaleKind v);
std::string_view to_string(CriterionOrigin v);
std::string_view to_string(CriterionStatus v);
std::string_view to_string(Provenance::Kind v);
std::string_view to_string(EvalMode v);
std::string_view to_string(SampleState v);

}  // namespace coeval
