#include "coeval/workspace.hpp"

#include <spdlog/spdlog.h>

#include "coeval/error.hpp"
#include "coeval/serialize.hpp"
#include "coeval/text.hpp"

namespace coeval {

using nlohmann::json;

namespace {

SessionLog::Options log_options(const WorkspaceOptions& o) {
  SessionLog::Options lo;
  lo.fsync = o.fsync;
  lo.clock = o.clock ? o.clock : system_clock();
  return lo;
}

/// Smallest k >= start such that prefix + k is not a key of `map`.
template <class Map>
int next_free(const Map& map, const std::string& prefix, int start) {
  while (map.count(prefix + std::to_string(start))) ++start;
  return start;
}

}  // namespace

Workspace::Workspace(WorkspaceOptions options, std::shared_ptr<Gateway> gateway, PromptLibrary prompts)
    : options_(std::move(options)),
      gateway_(std::move(gateway)),
      prompts_(std::move(prompts)),
      log_(options_.log_path, log_options(options_)) {
  if (!options_.clock) options_.clock = system_clock();
  state_ = replay(log_.initial_contents().records);
  next_batch_ = next_free(state_.batches, "d", 1);
  next_run_ = next_free(state_.runs, "r", 1);
}

Gateway& Workspace::gateway() {
  if (!gateway_) throw Error(Errc::invalid_argument, "no model provider is configured");
  return *gateway_;
}

void Workspace::commit(const std::string& type, json data) {
  LogRecord r;
  r.type = type;
  r.data = data;
  r.seq = log_.append(type, std::move(data));
  apply_record(state_, r);
}

State Workspace::snapshot() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::string Workspace::import_task(Task task) {
  std::lock_guard lock(mutex_);
  if (task.id.empty()) task.id = "t" + std::to_string(next_free(state_.tasks, "t", state_.tasks.size() + 1));
  if (state_.tasks.count(task.id)) throw Error(Errc::conflict, "task " + task.id + " already exists");
  for (std::size_t i = 0; i < task.samples.size(); ++i)
    if (task.samples[i].id.empty()) task.samples[i].id = "s" + std::to_string(i + 1);
  task.validate();
  const auto id = task.id;
  commit("task_created", json{{"task", task}});
  return id;
}

std::string Workspace::reserve_batch_id() {
  std::lock_guard lock(mutex_);
  next_batch_ = next_free(state_.batches, "d", next_batch_);
  return "d" + std::to_string(next_batch_++);
}

DraftBatch Workspace::draft_criteria(const std::string& task_id, int n_samples, double temperature,
                                     std::optional<std::string> requested_id) {
  Task task;
  {
    std::lock_guard lock(mutex_);
    task = state_.task(task_id);
  }
  const auto batch_id = requested_id ? *requested_id : reserve_batch_id();
  DraftOptions opts;
  opts.model = options_.model;
  opts.n_samples = n_samples;
  opts.sample_temperature = temperature;
  opts.max_output_tokens = options_.max_output_tokens;
  auto drafted = coeval::draft_criteria(gateway(), prompts_, task, batch_id, opts);
  const auto report = consistency_report(gateway(), drafted.deterministic, drafted.sampled);

  json sets = json::array({drafted.deterministic});
  for (const auto& s : drafted.sampled) sets.push_back(s);
  std::lock_guard lock(mutex_);
  if (state_.batches.count(batch_id)) throw Error(Errc::conflict, "draft batch " + batch_id + " already exists");
  commit("draft_generated", json{{"batch_id", batch_id},
                                 {"task_id", task_id},
                                 {"temperature", temperature},
                                 {"n_samples", n_samples},
                                 {"sets", sets},
                                 {"consistency", report}});
  return state_.batches.at(batch_id);
}

CriteriaSet Workspace::apply_action(const std::string& set_id, HumanAction action) {
  std::lock_guard lock(mutex_);
  const auto& set = state_.set(set_id);
  if (action.timestamp == Timestamp{}) action.timestamp = options_.clock();
  coeval::apply_action(set, action);  // validate before anything is written
  commit("action_applied", json{{"set_id", set_id}, {"action", action}});
  return state_.sets.at(set_id);
}

CriteriaSet Workspace::finalize_set(const std::string& set_id) {
  std::lock_guard lock(mutex_);
  coeval::finalize(state_.set(set_id));
  commit("set_finalized", json{{"set_id", set_id}});
  return state_.sets.at(set_id);
}

AlignmentRates Workspace::alignment(const std::string& set_id) const {
  std::lock_guard lock(mutex_);
  const auto& set = state_.set(set_id);
  return alignment_rates(set, set.audit);
}

EvaluationRun Workspace::create_run(const std::string& task_id, const std::optional<std::string>& set_id, EvalMode mode,
                                    std::vector<std::string> sample_ids) {
  std::lock_guard lock(mutex_);
  const auto& task = state_.task(task_id);
  if (sample_ids.empty())
    for (const auto& s : task.samples) sample_ids.push_back(s.id);
  for (const auto& id : sample_ids)
    if (!task.find_sample(id)) throw Error(Errc::not_found, "task " + task_id + " has no sample " + id);

  EvaluationRun run;
  run.id = "r" + std::to_string(next_run_ = next_free(state_.runs, "r", next_run_));
  ++next_run_;
  run.task_id = task_id;
  run.criteria_set_id = set_id;
  run.mode = mode;
  run.sample_ids = std::move(sample_ids);
  run.statuses.assign(run.sample_ids.size(), SampleStatus{});
  validate_run(run, set_id ? &state_.set(*set_id) : nullptr);
  commit("run_created", json{{"run", run}});
  return run;
}

EvaluationRun Workspace::execute_run(const std::string& run_id, std::function<void(const ProgressEvent&)> on_progress) {
  EvaluationRun run;
  Task task;
  std::optional<CriteriaSet> criteria;
  {
    std::lock_guard lock(mutex_);
    run = state_.run(run_id);
    if (running_.count(run_id) || !run.all_pending())
      throw Error(Errc::already_run, "run " + run_id + " has already been executed");
    task = state_.task(run.task_id);
    if (run.criteria_set_id) criteria = state_.set(*run.criteria_set_id);
    running_.insert(run_id);
  }

  BatchContext ctx{gateway(), prompts_, task, criteria ? &*criteria : nullptr, {}, {}, std::move(on_progress)};
  ctx.options.model = options_.model;
  ctx.options.max_output_tokens = options_.max_output_tokens;
  ctx.on_outcome = [&](const SampleOutcome& o) {
    std::lock_guard lock(mutex_);
    if (o.evaluation)
      commit("sample_evaluated", json{{"run_id", run_id}, {"index", o.index}, {"evaluation", *o.evaluation}});
    else
      commit("sample_failed",
             json{{"run_id", run_id}, {"index", o.index}, {"sample_id", o.sample_id}, {"reason", o.status.reason}});
  };

  try {
    run_batch(run, ctx);
  } catch (...) {
    std::lock_guard lock(mutex_);
    running_.erase(run_id);
    throw;
  }
  std::lock_guard lock(mutex_);
  running_.erase(run_id);
  return state_.runs.at(run_id);
}

SampleEvaluation Workspace::finalize_evaluation(const std::string& evaluation_id, const std::vector<HumanAction>& edits,
                                                const std::string& annotator) {
  std::lock_guard lock(mutex_);
  const auto& draft = state_.draft(evaluation_id);
  if (state_.finals.count(evaluation_id))
    throw Error(Errc::conflict, "evaluation " + evaluation_id + " already has a final version",
                {{"evaluation_id", evaluation_id}});
  const auto& run = state_.run(draft.run_id);
  std::vector<Criterion> criteria;
  if (run.criteria_set_id) criteria = state_.set(*run.criteria_set_id).criteria;

  std::vector<HumanAction> stamped = edits;
  for (auto& e : stamped) {
    if (e.actor.empty()) e.actor = annotator;
    if (e.timestamp == Timestamp{}) e.timestamp = options_.clock();
  }
  auto final_eval = human_finalize_evaluation(draft, stamped, annotator, criteria);
  commit("evaluation_finalized", json{{"evaluation", final_eval}});
  return state_.finals.at(evaluation_id);
}

std::size_t Workspace::import_human_scores(const std::string& run_id, const std::vector<HumanScore>& scores) {
  std::lock_guard lock(mutex_);
  const auto& run = state_.run(run_id);
  const CriteriaSet* set = run.criteria_set_id ? &state_.set(*run.criteria_set_id) : nullptr;
  for (const auto& s : scores) {
    const auto slash = s.item.rfind('/');
    if (slash == std::string::npos) throw Error(Errc::invalid_argument, "malformed score item " + s.item);
    const auto sample = s.item.substr(0, slash);
    const auto key = s.item.substr(slash + 1);
    if (std::find(run.sample_ids.begin(), run.sample_ids.end(), sample) == run.sample_ids.end())
      throw Error(Errc::invalid_argument, "run " + run_id + " has no sample " + sample, {{"item", s.item}});
    ScoreScale scale = ScoreScale::likert5();
    if (!text::iequals(key, "overall")) {
      const Criterion* found = nullptr;
      if (set)
        for (const auto& c : set->criteria)
          if (c.id == key || text::iequals(c.name, key)) found = &c;
      if (!found) throw Error(Errc::invalid_argument, "item " + s.item + " names no criterion of the run");
      scale = found->scale;
    }
    if (!scale.contains(s.score))
      throw Error(Errc::score_out_of_scale, "score " + std::to_string(s.score) + " for " + s.item + " is off scale",
                  {{"item", s.item}, {"score", s.score}});
  }
  commit("human_scores_imported", json{{"run_id", run_id}, {"scores", scores}});
  return scores.size();
}

json Workspace::compute_report(const std::string& run_id, ReportKind kind, const ReportOptions& options) {
  std::lock_guard lock(mutex_);
  auto report = coeval::compute_report(state_, run_id, kind, options);
  commit("report_computed", json{{"run_id", run_id}, {"kind", to_string(kind)}, {"report", report}});
  return report;
}

}  // namespace coeval
