#pragma once

// In-memory project state and the reducer that rebuilds it from session-log
// records. Live operations and replay go through the same `apply_record`.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coeval/criteria.hpp"
#include "coeval/domain.hpp"
#include "coeval/session_store.hpp"

namespace coeval {

struct DraftBatch {
  std::string id;
  std::string task_id;
  std::string deterministic_set_id;
  std::vector<std::string> sampled_set_ids;
  double temperature = 0.0;
  ConsistencyReport consistency;
  friend bool operator==(const DraftBatch&, const DraftBatch&) = default;
};

/// One externally collected rating. `item` is "<sample>/<criterion id or
/// name>" or "<sample>/overall".
struct HumanScore {
  std::string item;
  std::string rater;
  int score = 0;
  friend bool operator==(const HumanScore&, const HumanScore&) = default;
};

struct State {
  std::map<std::string, Task> tasks;
  std::map<std::string, DraftBatch> batches;
  std::map<std::string, CriteriaSet> sets;
  std::map<std::string, EvaluationRun> runs;
  /// LLM drafts and human-final versions, both keyed by evaluation id.
  std::map<std::string, SampleEvaluation> drafts;
  std::map<std::string, SampleEvaluation> finals;
  std::map<std::string, std::vector<HumanScore>> human_scores;  // by run id
  std::map<std::string, nlohmann::json> reports;               // "<run>:<kind>"
  std::uint64_t last_seq = 0;

  const Task& task(const std::string& id) const;
  const CriteriaSet& set(const std::string& id) const;
  const EvaluationRun& run(const std::string& id) const;
  const SampleEvaluation& draft(const std::string& evaluation_id) const;

  friend bool operator==(const State&, const State&) = default;
};

/// Throws Error(corrupt_record) if the record does not apply to `state`.
void apply_record(State& state, const LogRecord& record);
State replay(std::span<const LogRecord> records);

void to_json(nlohmann::json& j, const PairDetail& v);
void from_json(const nlohmann::json& j, PairDetail& v);
void to_json(nlohmann::json& j, const ConsistencyReport& v);
void from_json(const nlohmann::json& j, ConsistencyReport& v);
void to_json(nlohmann::json& j, const AlignmentRates& v);
void to_json(nlohmann::json& j, const DraftBatch& v);
void to_json(nlohmann::json& j, const HumanScore& v);
/// Canonical JSON of the whole state (maps serialize in key order).
void to_json(nlohmann::json& j, const State& v);
/// SHA-256 of the canonical JSON; equal states have equal digests.
std::string state_digest(const State& state);
void from_json(const nlohmann::json& j, HumanScore& v);

/// Per-table CSV files (tasks, samples, criteria, actions, runs, evaluations,
/// overall) written into `dir`. Returns the file names written.
std::vector<std::string> export_csv(const State& state, const std::filesystem::path& dir);

/// Reads a task file: a header line {description, demo_input, demo_output}
/// followed by one {input, output, source} line per sample. Samples without
/// an id become "s1", "s2", ...
Task load_task_jsonl(const std::filesystem::path& path);
Task parse_task_jsonl(std::string_view content);

/// CSV with columns item,rater,score (header row optional).
std::vector<HumanScore> parse_human_scores_csv(std::string_view content);

}  // namespace coeval
