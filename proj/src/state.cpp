#include "coeval/state.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "coeval/digest.hpp"
#include "coeval/error.hpp"
#include "coeval/serialize.hpp"
#include "coeval/text.hpp"

namespace coeval {

using nlohmann::json;

namespace {

template <class Map>
const typename Map::mapped_type& lookup(const Map& map, const std::string& id, const char* what) {
  const auto it = map.find(id);
  if (it == map.end()) throw Error(Errc::not_found, std::string("unknown ") + what + " " + id, {{"id", id}});
  return it->second;
}

template <class Map>
typename Map::mapped_type& lookup_mut(Map& map, const std::string& id, const LogRecord& r) {
  const auto it = map.find(id);
  if (it == map.end())
    throw Error(Errc::corrupt_record, "record " + std::to_string(r.seq) + " refers to unknown id " + id,
                {{"seq", r.seq}});
  return it->second;
}

void set_status(State& state, const LogRecord& r, const std::string& run_id, std::size_t index, SampleStatus status) {
  auto& run = lookup_mut(state.runs, run_id, r);
  if (index >= run.statuses.size())
    throw Error(Errc::corrupt_record, "record " + std::to_string(r.seq) + " has a bad sample index", {{"seq", r.seq}});
  run.statuses[index] = std::move(status);
}

}  // namespace

const Task& State::task(const std::string& id) const { return lookup(tasks, id, "task"); }
const CriteriaSet& State::set(const std::string& id) const { return lookup(sets, id, "criteria set"); }
const EvaluationRun& State::run(const std::string& id) const { return lookup(runs, id, "run"); }
const SampleEvaluation& State::draft(const std::string& id) const { return lookup(drafts, id, "evaluation"); }

void apply_record(State& state, const LogRecord& r) {
  const auto& d = r.data;
  try {
    if (r.type == "task_created") {
      auto task = d.at("task").get<Task>();
      const auto id = task.id;
      state.tasks[id] = std::move(task);
    } else if (r.type == "draft_generated") {
      DraftBatch batch;
      batch.id = d.at("batch_id").get<std::string>();
      batch.task_id = d.at("task_id").get<std::string>();
      batch.temperature = d.value("temperature", 0.0);
      batch.consistency = d.at("consistency").get<ConsistencyReport>();
      for (const auto& sj : d.at("sets")) {
        auto set = sj.get<CriteriaSet>();
        if (set.provenance.kind == Provenance::Kind::deterministic_draft)
          batch.deterministic_set_id = set.id;
        else
          batch.sampled_set_ids.push_back(set.id);
        const auto id = set.id;
        state.sets[id] = std::move(set);
      }
      state.batches[batch.id] = std::move(batch);
    } else if (r.type == "action_applied") {
      auto& set = lookup_mut(state.sets, d.at("set_id").get<std::string>(), r);
      set = apply_action(set, d.at("action").get<HumanAction>());
    } else if (r.type == "set_finalized") {
      auto& set = lookup_mut(state.sets, d.at("set_id").get<std::string>(), r);
      set = finalize(set);
    } else if (r.type == "run_created") {
      auto run = d.at("run").get<EvaluationRun>();
      const auto id = run.id;
      state.runs[id] = std::move(run);
    } else if (r.type == "sample_evaluated") {
      auto eval = d.at("evaluation").get<SampleEvaluation>();
      set_status(state, r, d.at("run_id").get<std::string>(), d.at("index").get<std::size_t>(),
                 {SampleState::llm_drafted, {}});
      const auto id = eval.id;
      state.drafts[id] = std::move(eval);
    } else if (r.type == "sample_failed") {
      set_status(state, r, d.at("run_id").get<std::string>(), d.at("index").get<std::size_t>(),
                 {SampleState::failed, d.at("reason").get<std::string>()});
    } else if (r.type == "evaluation_finalized") {
      auto eval = d.at("evaluation").get<SampleEvaluation>();
      const auto& run = lookup_mut(state.runs, eval.run_id, r);
      for (std::size_t i = 0; i < run.sample_ids.size(); ++i)
        if (run.sample_ids[i] == eval.sample_id) set_status(state, r, eval.run_id, i, {SampleState::human_finalized, {}});
      const auto id = eval.id;
      state.finals[id] = std::move(eval);
    } else if (r.type == "human_scores_imported") {
      auto& scores = state.human_scores[d.at("run_id").get<std::string>()];
      // A later score for the same (item, rater) replaces the earlier one.
      for (const auto& j : d.at("scores")) {
        auto s = j.get<HumanScore>();
        auto it = std::find_if(scores.begin(), scores.end(),
                               [&](const HumanScore& h) { return h.item == s.item && h.rater == s.rater; });
        if (it != scores.end())
          *it = std::move(s);
        else
          scores.push_back(std::move(s));
      }
    } else if (r.type == "report_computed") {
      state.reports[d.at("run_id").get<std::string>() + ":" + d.at("kind").get<std::string>()] = d.at("report");
    }
    // Unknown record types from newer writers are skipped.
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_record, "record " + std::to_string(r.seq) + " (" + r.type + "): " + e.what(),
                {{"seq", r.seq}});
  } catch (const Error& e) {
    if (e.code() == Errc::corrupt_record) throw;
    throw Error(Errc::corrupt_record, "record " + std::to_string(r.seq) + " (" + r.type + "): " + e.what(),
                {{"seq", r.seq}, {"cause", to_string(e.code())}});
  }
  state.last_seq = r.seq;
}

State replay(std::span<const LogRecord> records) {
  State state;
  for (const auto& r : records) apply_record(state, r);
  return state;
}

// ---- json ------------------------------------------------------------------

void to_json(json& j, const PairDetail& v) {
  j = json{{"from", v.from}, {"to", v.to}, {"mean_matched_similarity", v.mean_matched_similarity}};
}
void from_json(const json& j, PairDetail& v) {
  v.from = j.at("from").get<std::string>();
  v.to = j.at("to").get<std::string>();
  v.mean_matched_similarity = j.at("mean_matched_similarity").get<double>();
}

void to_json(json& j, const ConsistencyReport& v) {
  j = json{{"cc", number_or_nan(v.cc)},
           {"icc", number_or_nan(v.icc)},
           {"n_samples", v.n_samples},
           {"per_pair_details", v.per_pair_details}};
}
void from_json(const json& j, ConsistencyReport& v) {
  auto opt = [](const json& x) -> std::optional<double> {
    if (x.is_number()) return x.get<double>();
    return std::nullopt;
  };
  v.cc = opt(j.at("cc"));
  v.icc = opt(j.at("icc"));
  v.n_samples = j.at("n_samples").get<int>();
  v.per_pair_details = j.value("per_pair_details", std::vector<PairDetail>{});
}

void to_json(json& j, const AlignmentRates& v) {
  j = json{{"approval", v.approval},
           {"need_to_improve", v.need_to_improve},
           {"deletion", v.deletion},
           {"missing", v.missing},
           {"counts",
            {{"approval", v.counts.approval},
             {"need_to_improve", v.counts.need_to_improve},
             {"deletion", v.counts.deletion},
             {"missing", v.counts.missing}}}};
}

void to_json(json& j, const DraftBatch& v) {
  j = json{{"id", v.id},
           {"task_id", v.task_id},
           {"deterministic_set_id", v.deterministic_set_id},
           {"sampled_set_ids", v.sampled_set_ids},
           {"temperature", v.temperature},
           {"consistency", v.consistency}};
}

void to_json(json& j, const HumanScore& v) { j = json{{"item", v.item}, {"rater", v.rater}, {"score", v.score}}; }

void to_json(json& j, const State& v) {
  j = json{{"tasks", v.tasks},   {"batches", v.batches}, {"sets", v.sets},
           {"runs", v.runs},     {"drafts", v.drafts},   {"finals", v.finals},
           {"human_scores", v.human_scores}, {"reports", v.reports}, {"last_seq", v.last_seq}};
}

std::string state_digest(const State& state) { return sha256_hex(json(state).dump()); }

void from_json(const json& j, HumanScore& v) {
  v.item = j.at("item").get<std::string>();
  v.rater = j.at("rater").get<std::string>();
  v.score = j.at("score").get<int>();
}

// ---- task and score files --------------------------------------------------

Task parse_task_jsonl(std::string_view content) {
  Task task;
  bool have_header = false;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::invalid_argument, "task file line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (!j.contains("description"))
          throw Error(Errc::invalid_argument, "task file must start with a header carrying a description");
        task.id = j.value("id", "");
        task.description = j.at("description").get<std::string>();
        task.demo_input = j.value("demo_input", "");
        task.demo_output = j.value("demo_output", "");
        have_header = true;
        continue;
      }
      Sample s;
      s.id = j.value("id", "s" + std::to_string(task.samples.size() + 1));
      s.input = j.at("input").get<std::string>();
      s.output = j.at("output").get<std::string>();
      s.source = j.value("source", json("human_reference")).get<SampleSource>();
      task.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw Error(Errc::invalid_argument, "task file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw Error(Errc::invalid_argument, "task file is empty");
  for (const auto& s : task.samples)
    if (s.id.find('/') != std::string::npos)
      throw Error(Errc::invalid_argument, "sample id " + s.id + " must not contain '/'");
  return task;
}

Task load_task_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task_jsonl(ss.str());
}

std::vector<HumanScore> parse_human_scores_csv(std::string_view content) {
  std::vector<HumanScore> out;
  std::size_t row_no = 0;
  for (const auto& row : text::parse_csv(content)) {
    ++row_no;
    if (row.size() != 3)
      throw Error(Errc::invalid_argument, "human score row " + std::to_string(row_no) + " needs item,rater,score");
    if (row_no == 1 && text::iequals(text::trim(row[0]), "item")) continue;
    HumanScore s{text::trim(row[0]), text::trim(row[1]), 0};
    try {
      std::size_t used = 0;
      const auto score_text = text::trim(row[2]);
      s.score = std::stoi(score_text, &used);
      if (used != score_text.size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "human score row " + std::to_string(row_no) + " has a non-integer score");
    }
    if (s.item.find('/') == std::string::npos)
      throw Error(Errc::invalid_argument, "human score item " + s.item + " must look like <sample>/<criterion>");
    out.push_back(std::move(s));
  }
  return out;
}

// ---- CSV export ------------------------------------------------------------

namespace {

std::string target_string(const ActionTarget& t) {
  if (const auto* c = std::get_if<CriterionRef>(&t)) return c->criterion_id;
  if (const auto* c = std::get_if<CellRef>(&t)) return c->sample_id + "/" + c->criterion_id;
  if (const auto* c = std::get_if<OverallRef>(&t)) return c->sample_id + "/overall";
  return "";
}

std::string action_payload(const ActionKind& k) {
  if (const auto* a = std::get_if<action::NeedToImprove>(&k)) return a->new_statement;
  if (const auto* a = std::get_if<action::Add>(&k)) return a->name + ": " + a->statement;
  if (const auto* a = std::get_if<action::EditScore>(&k)) return std::to_string(a->new_score);
  if (const auto* a = std::get_if<action::EditExplanation>(&k)) return a->new_text;
  return "";
}

std::string version_name(const EvalVersion& v) {
  return v.kind == EvalVersion::Kind::llm_draft ? "llm_draft" : "human_final";
}

}  // namespace

std::vector<std::string> export_csv(const State& state, const std::filesystem::path& dir) {
  using text::csv_row;
  std::filesystem::create_directories(dir);
  std::map<std::string, std::string> files;

  auto& tasks = files["tasks.csv"];
  auto& samples = files["samples.csv"];
  tasks = csv_row({"task_id", "description", "demo_input", "demo_output", "n_samples"});
  samples = csv_row({"task_id", "sample_id", "source", "input", "output"});
  for (const auto& [id, t] : state.tasks) {
    tasks += csv_row({id, t.description, t.demo_input, t.demo_output, std::to_string(t.samples.size())});
    for (const auto& s : t.samples) samples += csv_row({id, s.id, s.source.label(), s.input, s.output});
  }

  auto& criteria = files["criteria.csv"];
  auto& actions = files["actions.csv"];
  criteria = csv_row({"set_id", "task_id", "provenance", "criterion_id", "name", "statement", "scale", "origin",
                      "status"});
  actions = csv_row({"set_id", "index", "actor", "action", "target", "payload", "timestamp"});
  for (const auto& [id, set] : state.sets) {
    for (const auto& c : set.criteria)
      criteria += csv_row({id, set.task_id, std::string(to_string(set.provenance.kind)), c.id, c.name, c.statement,
                           std::string(to_string(c.scale.kind)), std::string(to_string(c.origin)),
                           std::string(to_string(c.status))});
    for (std::size_t i = 0; i < set.audit.size(); ++i) {
      const auto& a = set.audit[i];
      actions += csv_row({id, std::to_string(i + 1), a.actor, std::string(action_name(a.kind)), target_string(a.target),
                          action_payload(a.kind), format_rfc3339(a.timestamp)});
    }
  }

  auto& runs = files["runs.csv"];
  runs = csv_row({"run_id", "task_id", "criteria_set_id", "mode", "sample_id", "state", "reason"});
  for (const auto& [id, run] : state.runs)
    for (std::size_t i = 0; i < run.sample_ids.size(); ++i)
      runs += csv_row({id, run.task_id, run.criteria_set_id.value_or(""), std::string(to_string(run.mode)),
                       run.sample_ids[i], std::string(to_string(run.statuses[i].state)), run.statuses[i].reason});

  auto& evals = files["evaluations.csv"];
  auto& overall = files["overall.csv"];
  evals = csv_row({"evaluation_id", "run_id", "sample_id", "version", "annotator", "criterion_id", "score",
                   "explanation"});
  overall = csv_row({"evaluation_id", "run_id", "sample_id", "version", "annotator", "overall_score", "explanation"});
  for (const auto* versions : {&state.drafts, &state.finals})
    for (const auto& [id, e] : *versions) {
      for (const auto& ce : e.criterion_evals)
        evals += csv_row({id, e.run_id, e.sample_id, version_name(e.version), e.version.annotator_id, ce.criterion_id,
                          std::to_string(ce.score), ce.explanation});
      for (const auto& missing : e.missing_criteria)
        evals += csv_row({id, e.run_id, e.sample_id, version_name(e.version), e.version.annotator_id, missing, "", ""});
      overall += csv_row({id, e.run_id, e.sample_id, version_name(e.version), e.version.annotator_id,
                          std::to_string(e.overall_score), e.overall_explanation});
    }

  std::vector<std::string> written;
  for (const auto& [name, content] : files) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + (dir / name).string());
    out << content;
    written.push_back(name);
  }
  return written;
}

}  // namespace coeval
