#include "coeval/domain.hpp"

#include <algorithm>
#include <set>

#include "coeval/error.hpp"
#include "coeval/text.hpp"

namespace coeval {

ScoreScale ScoreScale::likert5() { return {ScaleKind::likert5, 1, 5, {}}; }
ScoreScale ScoreScale::level3() { return {ScaleKind::level3, 1, 3, {}}; }

ScoreScale ScoreScale::categorical3(std::vector<std::string> labels) {
  if (labels.empty()) labels = {"correct solution", "one error exists", "multiple errors exist"};
  return {ScaleKind::categorical3, 1, 3, std::move(labels)};
}

void ScoreScale::validate() const {
  switch (kind) {
    case ScaleKind::likert5:
      if (min != 1 || max != 5) throw Error(Errc::invalid_argument, "likert5 scale must span 1..5");
      break;
    case ScaleKind::level3:
      if (min != 1 || max != 3) throw Error(Errc::invalid_argument, "level3 scale must span 1..3");
      break;
    case ScaleKind::categorical3:
      if (labels.size() != 3) throw Error(Errc::invalid_argument, "categorical3 scale needs exactly 3 labels");
      if (min != 1 || max != 3) throw Error(Errc::invalid_argument, "categorical3 scale must span 1..3");
      break;
  }
}

void Task::validate() const {
  if (text::trim(description).empty()) throw Error(Errc::invalid_argument, "task description is empty");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.id.empty()) throw Error(Errc::invalid_argument, "sample id is empty");
    if (!ids.insert(s.id).second)
      throw Error(Errc::invalid_argument, "duplicate sample id " + s.id, {{"sample_id", s.id}});
    if (s.input.empty() || s.output.empty())
      throw Error(Errc::invalid_argument, "sample " + s.id + " has empty input or output", {{"sample_id", s.id}});
  }
}

const Sample* Task::find_sample(const std::string& sample_id) const {
  auto it = std::find_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.id == sample_id; });
  return it == samples.end() ? nullptr : &*it;
}

std::string Criterion::text() const { return name + ": " + statement; }

const Criterion* CriteriaSet::find(const std::string& criterion_id) const {
  auto it = std::find_if(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.id == criterion_id; });
  return it == criteria.end() ? nullptr : &*it;
}

HumanAction HumanAction::approve(std::string actor, std::string criterion_id, Timestamp ts) {
  return {std::move(actor), CriterionRef{std::move(criterion_id)}, action::Approve{}, ts};
}
HumanAction HumanAction::need_to_improve(std::string actor, std::string criterion_id, std::string statement,
                                         Timestamp ts) {
  return {std::move(actor), CriterionRef{std::move(criterion_id)}, action::NeedToImprove{std::move(statement)}, ts};
}
HumanAction HumanAction::remove(std::string actor, std::string criterion_id, Timestamp ts) {
  return {std::move(actor), CriterionRef{std::move(criterion_id)}, action::Delete{}, ts};
}
HumanAction HumanAction::add(std::string actor, std::string name, std::string statement, ScoreScale scale,
                             Timestamp ts) {
  return {std::move(actor), std::monostate{}, action::Add{std::move(name), std::move(statement), std::move(scale)},
          ts};
}
HumanAction HumanAction::edit_score(std::string actor, ActionTarget cell, int score, Timestamp ts) {
  return {std::move(actor), std::move(cell), action::EditScore{score}, ts};
}
HumanAction HumanAction::edit_explanation(std::string actor, ActionTarget cell, std::string text, Timestamp ts) {
  return {std::move(actor), std::move(cell), action::EditExplanation{std::move(text)}, ts};
}

std::string_view action_name(const ActionKind& kind) {
  struct Visitor {
    std::string_view operator()(const action::Approve&) const { return "approve"; }
    std::string_view operator()(const action::NeedToImprove&) const { return "need_to_improve"; }
    std::string_view operator()(const action::Delete&) const { return "delete"; }
    std::string_view operator()(const action::Add&) const { return "add"; }
    std::string_view operator()(const action::EditScore&) const { return "edit_score"; }
    std::string_view operator()(const action::EditExplanation&) const { return "edit_explanation"; }
  };
  return std::visit(Visitor{}, kind);
}

CriteriaSet make_draft_set(std::string id, std::string task_id, std::vector<Criterion> criteria,
                           Provenance provenance, double temperature) {
  CriteriaSet set;
  set.id = std::move(id);
  set.task_id = std::move(task_id);
  set.provenance = provenance;
  set.drafted_as = provenance;
  set.temperature = temperature;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    criteria[i].id = set.id + "-c" + std::to_string(i + 1);
    criteria[i].status = CriterionStatus::draft;
  }
  set.criteria = std::move(criteria);
  set.initial = set.criteria;
  return set;
}

namespace {

bool name_taken(const CriteriaSet& set, const std::string& name) {
  return std::any_of(set.criteria.begin(), set.criteria.end(), [&](const Criterion& c) {
    return c.status != CriterionStatus::deleted && text::iequals(c.name, name);
  });
}

Criterion& target_criterion(CriteriaSet& set, const HumanAction& act) {
  const auto* ref = std::get_if<CriterionRef>(&act.target);
  if (ref == nullptr) throw Error(Errc::invalid_action, "criteria actions must target a criterion id");
  auto it = std::find_if(set.criteria.begin(), set.criteria.end(),
                         [&](const Criterion& c) { return c.id == ref->criterion_id; });
  if (it == set.criteria.end())
    throw Error(Errc::unknown_target, "no criterion " + ref->criterion_id + " in set " + set.id,
                {{"criterion_id", ref->criterion_id}, {"set_id", set.id}});
  return *it;
}

}  // namespace

CriteriaSet apply_action(const CriteriaSet& set, const HumanAction& act) {
  if (set.finalized())
    throw Error(Errc::set_already_finalized, "criteria set " + set.id + " is finalized", {{"set_id", set.id}});
  CriteriaSet next = set;
  std::visit(
      [&](const auto& kind) {
        using K = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<K, action::Approve>) {
          target_criterion(next, act).status = CriterionStatus::approved;
        } else if constexpr (std::is_same_v<K, action::NeedToImprove>) {
          auto& c = target_criterion(next, act);
          const auto statement = text::trim(kind.new_statement);
          if (statement.empty())
            throw Error(Errc::empty_replacement_statement, "need_to_improve requires a replacement statement");
          c.statement = statement;
          c.status = CriterionStatus::revised;
        } else if constexpr (std::is_same_v<K, action::Delete>) {
          target_criterion(next, act).status = CriterionStatus::deleted;
        } else if constexpr (std::is_same_v<K, action::Add>) {
          const auto name = text::trim(kind.name);
          const auto statement = text::trim(kind.statement);
          if (name.empty() || statement.empty())
            throw Error(Errc::invalid_action, "added criterion needs a name and a statement");
          if (name_taken(next, name))
            throw Error(Errc::invalid_action, "criterion name already used in set: " + name, {{"name", name}});
          kind.scale.validate();
          const auto added = std::count_if(next.criteria.begin(), next.criteria.end(), [](const Criterion& c) {
            return c.origin == CriterionOrigin::human_added;
          });
          Criterion c;
          c.id = next.id + "-h" + std::to_string(added + 1);
          c.name = name;
          c.statement = statement;
          c.scale = kind.scale;
          c.origin = CriterionOrigin::human_added;
          c.status = CriterionStatus::approved;
          next.criteria.push_back(std::move(c));
        } else {
          throw Error(Errc::invalid_action,
                      std::string(action_name(act.kind)) + " is an evaluation edit, not a criteria action");
        }
      },
      act.kind);
  next.audit.push_back(act);
  return next;
}

CriteriaSet finalize(const CriteriaSet& set) {
  if (set.finalized())
    throw Error(Errc::set_already_finalized, "criteria set " + set.id + " is already finalized", {{"set_id", set.id}});
  std::vector<std::string> drafts;
  for (const auto& c : set.criteria)
    if (c.status == CriterionStatus::draft) drafts.push_back(c.id);
  if (!drafts.empty())
    throw Error(Errc::draft_criteria_remain, std::to_string(drafts.size()) + " criteria still in draft",
                {{"criterion_ids", drafts}});
  CriteriaSet out = set;
  out.criteria.clear();
  for (const auto& c : set.criteria)
    if (c.active()) out.criteria.push_back(c);
  out.provenance = {Provenance::Kind::finalized, 0};
  return out;
}

CriteriaSet replay_audit(const CriteriaSet& set) {
  CriteriaSet base = set;
  base.criteria = set.initial;
  base.provenance = set.drafted_as;
  base.audit.clear();
  for (const auto& act : set.audit) base = apply_action(base, act);
  return set.finalized() ? finalize(base) : base;
}

const CriterionEvaluation* SampleEvaluation::find(const std::string& criterion_id) const {
  auto it = std::find_if(criterion_evals.begin(), criterion_evals.end(),
                         [&](const CriterionEvaluation& e) { return e.criterion_id == criterion_id; });
  return it == criterion_evals.end() ? nullptr : &*it;
}

bool EvaluationRun::all_pending() const {
  return std::all_of(statuses.begin(), statuses.end(),
                     [](const SampleStatus& s) { return s.state == SampleState::pending; });
}

std::string_view to_string(ScaleKind v) {
  switch (v) {
    case ScaleKind::likert5: return "likert5";
    case ScaleKind::level3: return "level3";
    case ScaleKind::categorical3: return "categorical3";
  }
  return "?";
}
std::string_view to_string(CriterionOrigin v) {
  return v == CriterionOrigin::llm_generated ? "llm_generated" : "human_added";
}
std::string_view to_string(CriterionStatus v) {
  switch (v) {
    case CriterionStatus::draft: return "draft";
    case CriterionStatus::approved: return "approved";
    case CriterionStatus::revised: return "revised";
    case CriterionStatus::deleted: return "deleted";
  }
  return "?";
}
std::string_view to_string(Provenance::Kind v) {
  switch (v) {
    case Provenance::Kind::deterministic_draft: return "deterministic_draft";
    case Provenance::Kind::sampled_draft: return "sampled_draft";
    case Provenance::Kind::finalized: return "finalized";
  }
  return "?";
}
std::string_view to_string(EvalMode v) {
  switch (v) {
    case EvalMode::direct: return "direct";
    case EvalMode::step_by_step: return "step_by_step";
    case EvalMode::step_by_step_human: return "step_by_step_human";
  }
  return "?";
}
std::string_view to_string(SampleState v) {
  switch (v) {
    case SampleState::pending: return "pending";
    case SampleState::llm_drafted: return "llm_drafted";
    case SampleState::human_finalized: return "human_finalized";
    case SampleState::failed: return "failed";
  }
  return "?";
}

}  // namespace coeval
