#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "coeval/criteria.hpp"
#include "coeval/evaluation.hpp"
#include "coeval/reports.hpp"
#include "coeval/session_store.hpp"
#include "coeval/state.hpp"

namespace coeval {

struct WorkspaceOptions {
  std::filesystem::path log_path;
  Clock clock;  // defaults to the system clock
  bool fsync = false;
  std::string model;
  int max_output_tokens = 1024;
};

/// One project: a session log, the state replayed from it, and the gateway
/// used for model calls. Every mutation appends a record first and then
/// applies that same record to the in-memory state. Thread-safe.
class Workspace {
 public:
  Workspace(WorkspaceOptions options, std::shared_ptr<Gateway> gateway, PromptLibrary prompts);

  State snapshot() const;
  template <class F>
  auto read(F&& f) const {
    std::lock_guard lock(mutex_);
    return f(state_);
  }

  /// Assigns "t<k>" when the task has no id. Returns the id.
  std::string import_task(Task task);

  /// Batch ids come from reserve_batch_id() when not given.
  DraftBatch draft_criteria(const std::string& task_id, int n_samples, double temperature,
                            std::optional<std::string> batch_id = std::nullopt);
  std::string reserve_batch_id();

  /// Stamps the action with the workspace clock when it has no timestamp.
  CriteriaSet apply_action(const std::string& set_id, HumanAction action);
  CriteriaSet finalize_set(const std::string& set_id);
  AlignmentRates alignment(const std::string& set_id) const;

  /// Empty `sample_ids` selects every sample of the task.
  EvaluationRun create_run(const std::string& task_id, const std::optional<std::string>& set_id, EvalMode mode,
                           std::vector<std::string> sample_ids = {});
  /// Throws Error(already_run) if the run has started before.
  EvaluationRun execute_run(const std::string& run_id, std::function<void(const ProgressEvent&)> on_progress = {});

  SampleEvaluation finalize_evaluation(const std::string& evaluation_id, const std::vector<HumanAction>& edits,
                                       const std::string& annotator);

  std::size_t import_human_scores(const std::string& run_id, const std::vector<HumanScore>& scores);

  nlohmann::json compute_report(const std::string& run_id, ReportKind kind, const ReportOptions& options = {});

  const PromptLibrary& prompts() const noexcept { return prompts_; }
  const std::filesystem::path& log_path() const noexcept { return log_.path(); }

 private:
  /// Appends and applies under the caller's lock.
  void commit(const std::string& type, nlohmann::json data);
  Gateway& gateway();

  WorkspaceOptions options_;
  std::shared_ptr<Gateway> gateway_;
  PromptLibrary prompts_;
  mutable std::mutex mutex_;
  SessionLog log_;
  State state_;
  std::set<std::string> running_;
  int next_batch_ = 1;
  int next_run_ = 1;
};

}  // namespace coeval
