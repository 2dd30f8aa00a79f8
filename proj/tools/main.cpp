// coeval command-line driver. Every command is a thin wrapper over the
// library; exit codes: 0 ok, 2 usage, 3 provider failure, 4 data error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "coeval/error.hpp"
#include "coeval/providers.hpp"
#include "coeval/reports.hpp"
#include "coeval/serialize.hpp"
#include "coeval/service.hpp"
#include "coeval/state.hpp"
#include "coeval/text.hpp"
#include "coeval/workspace.hpp"

namespace {

using nlohmann::json;
using namespace coeval;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitProvider = 3;
constexpr int kExitData = 4;

struct Globals {
  std::string log = "coeval.jsonl";
  std::string config;
  bool json_output = false;
  std::string mock_script;
  std::string base_url;
  std::string api_key;
  std::string model;
  std::string embedding_model;
  std::string prompts;
  std::string clock_start;
  std::string transcript;
  std::string actor = "cli";
  int concurrency = 4;
  bool fsync = false;
  std::string log_level = "warn";
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, path + ": " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Config-file values fill whatever the command line and environment left unset.
void apply_config(Globals& g, const json& cfg) {
  auto fill = [&](std::string& field, const char* key) {
    if (field.empty() && cfg.contains(key)) field = cfg.at(key).get<std::string>();
  };
  const json provider = cfg.value("provider", json::object());
  auto fill_provider = [&](std::string& field, const char* key) {
    if (field.empty() && provider.contains(key)) field = provider.at(key).get<std::string>();
  };
  fill(g.mock_script, "mock_script");
  fill(g.prompts, "prompts");
  fill_provider(g.base_url, "base_url");
  fill_provider(g.model, "model");
  fill_provider(g.embedding_model, "embedding_model");
  if (g.api_key.empty() && provider.contains("api_key_env"))
    if (const char* v = std::getenv(provider.at("api_key_env").get<std::string>().c_str())) g.api_key = v;
  if (cfg.contains("concurrency")) g.concurrency = cfg.at("concurrency").get<int>();
}

std::shared_ptr<Gateway> make_gateway(const Globals& g) {
  Gateway::Options opts;
  opts.max_in_flight = g.concurrency;
  if (!g.transcript.empty()) opts.transcript_path = g.transcript;
  if (!g.mock_script.empty())
    return std::make_shared<Gateway>(ScriptedProvider::load(g.mock_script), std::make_shared<HashingEmbedder>(), opts);
  if (g.base_url.empty() && g.api_key.empty()) return nullptr;

  OpenAiOptions o;
  if (!g.base_url.empty()) o.base_url = g.base_url;
  o.api_key = g.api_key;
  o.embedding_model = g.embedding_model;
  std::shared_ptr<Embedder> embedder;
  if (g.embedding_model.empty()) {
    spdlog::warn("no embedding model configured; consistency uses the offline hashing embedder");
    embedder = std::make_shared<HashingEmbedder>();
  } else {
    embedder = std::make_shared<OpenAiEmbedder>(o);
  }
  return std::make_shared<Gateway>(std::make_shared<OpenAiChatProvider>(o), embedder, opts);
}

PromptLibrary load_prompts(const Globals& g) {
  return PromptLibrary::load(g.prompts.empty() ? PromptLibrary::default_dir() : std::filesystem::path(g.prompts));
}

std::unique_ptr<Workspace> open_workspace(const Globals& g, const std::string& log_override = {}) {
  WorkspaceOptions o;
  o.log_path = log_override.empty() ? g.log : log_override;
  o.fsync = g.fsync;
  o.model = g.model;
  if (!g.clock_start.empty()) o.clock = stepping_clock(parse_rfc3339(g.clock_start));
  return std::make_unique<Workspace>(o, make_gateway(g), load_prompts(g));
}

void print(const Globals& g, const json& payload, const std::string& human) {
  if (g.json_output)
    std::cout << payload.dump(2) << '\n';
  else
    std::cout << human;
}

std::string describe_set(const CriteriaSet& s) {
  std::ostringstream out;
  out << s.id << " (" << to_string(s.provenance.kind) << ", temperature " << s.temperature << ")\n";
  for (const auto& c : s.criteria)
    out << "  " << c.id << "  [" << to_string(c.status) << "]  " << c.text() << '\n';
  return out.str();
}

/// Splits "key=value"; the key may not contain '='.
std::pair<std::string, std::string> split_assignment(const std::string& s, const char* flag) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError(std::string(flag) + " expects KEY=VALUE, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

/// JSON array or JSON-lines of action objects.
std::vector<HumanAction> read_actions_file(const std::string& path) {
  const auto content = read_text_file(path);
  std::vector<HumanAction> out;
  const auto trimmed = text::trim(content);
  try {
    if (!trimmed.empty() && trimmed.front() == '[') {
      for (const auto& j : json::parse(trimmed)) out.push_back(j.get<HumanAction>());
    } else {
      for (const auto& line : text::split_lines(content))
        if (!text::trim(line).empty()) out.push_back(json::parse(line).get<HumanAction>());
    }
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, path + ": " + e.what());
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!text::trim(item).empty()) out.push_back(text::trim(item));
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Criteria drafting, human scrutiny and LLM evaluation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;

  app.add_option("--log", g.log, "Session log (JSON-lines)")->envname("COEVAL_LOG")->capture_default_str();
  app.add_option("--config", g.config, "JSON configuration file")->envname("COEVAL_CONFIG");
  app.add_flag("--json", g.json_output, "Machine-readable output")->envname("COEVAL_JSON");
  app.add_option("--mock-script", g.mock_script, "Answer model calls from a scripted transcript")
      ->envname("COEVAL_MOCK_SCRIPT");
  app.add_option("--base-url", g.base_url, "OpenAI-compatible API base URL")->envname("COEVAL_BASE_URL");
  app.add_option("--api-key", g.api_key, "API key")->envname("COEVAL_API_KEY");
  app.add_option("--model", g.model, "Chat model name")->envname("COEVAL_MODEL");
  app.add_option("--embedding-model", g.embedding_model, "Embedding model name")->envname("COEVAL_EMBEDDING_MODEL");
  app.add_option("--prompts", g.prompts, "Prompt template directory")->envname("COEVAL_PROMPT_DIR");
  app.add_option("--clock-start", g.clock_start, "Deterministic clock start (RFC 3339)")->envname("COEVAL_CLOCK_START");
  app.add_option("--transcript", g.transcript, "Append model calls to this JSON-lines file")
      ->envname("COEVAL_TRANSCRIPT");
  app.add_option("--actor", g.actor, "Actor recorded on human actions")->envname("COEVAL_ACTOR")->capture_default_str();
  app.add_option("--concurrency", g.concurrency, "Maximum in-flight model calls")
      ->envname("COEVAL_CONCURRENCY")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_flag("--fsync", g.fsync, "fsync after every log append")->envname("COEVAL_FSYNC");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")
      ->envname("COEVAL_LOG_LEVEL")
      ->capture_default_str();

  std::function<int()> action;

  // ---- task --------------------------------------------------------------
  auto* task = app.add_subcommand("task", "Tasks and their samples");
  task->require_subcommand(1);
  std::string task_file, task_id;
  auto* task_import = task->add_subcommand("import", "Import a task JSON-lines file");
  task_import->add_option("file", task_file, "Header line then one sample per line")->required()->check(CLI::ExistingFile);
  task_import->add_option("--id", task_id, "Task id (default t<k>)")->envname("COEVAL_TASK");
  task_import->callback([&] {
    action = [&] {
      auto t = load_task_jsonl(task_file);
      t.id = task_id;
      const auto n = t.samples.size();
      const auto id = open_workspace(g)->import_task(std::move(t));
      print(g, json{{"task_id", id}, {"samples", n}}, "imported " + std::to_string(n) + " samples as task " + id + "\n");
      return kExitOk;
    };
  });
  auto* task_show = task->add_subcommand("show", "Print a task");
  task_show->add_option("--task", task_id, "Task id")->required()->envname("COEVAL_TASK");
  task_show->callback([&] {
    action = [&] {
      const auto t = open_workspace(g)->read([&](const State& s) { return s.task(task_id); });
      std::ostringstream out;
      out << t.id << ": " << t.description << "\n" << t.samples.size() << " samples\n";
      print(g, json(t), out.str());
      return kExitOk;
    };
  });

  // ---- criteria ----------------------------------------------------------
  auto* criteria = app.add_subcommand("criteria", "Draft, scrutinize and finalize criteria");
  criteria->require_subcommand(1);
  int n_samples = 10;
  double temperature = 0.7;
  std::string set_id;
  auto* draft = criteria->add_subcommand("draft", "Draft one deterministic and N sampled criteria sets");
  draft->add_option("--task", task_id, "Task id")->required()->envname("COEVAL_TASK");
  draft->add_option("--n", n_samples, "Number of sampled drafts")
      ->envname("COEVAL_N_SAMPLES")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  draft->add_option("--temperature", temperature, "Sampling temperature")
      ->envname("COEVAL_TEMPERATURE")
      ->check(CLI::Range(0.0, 2.0))
      ->capture_default_str();
  draft->callback([&] {
    action = [&] {
      auto ws = open_workspace(g);
      const auto batch = ws->draft_criteria(task_id, n_samples, temperature);
      std::vector<CriteriaSet> sets;
      ws->read([&](const State& s) {
        sets.push_back(s.set(batch.deterministic_set_id));
        for (const auto& id : batch.sampled_set_ids) sets.push_back(s.set(id));
        return 0;
      });
      std::string human;
      for (const auto& s : sets) human += describe_set(s) + "\n";
      human += render_consistency_table({batch});
      print(g, json{{"batch", batch}, {"sets", sets}}, human);
      return kExitOk;
    };
  });

  std::vector<std::string> approve_ids, revise_specs, delete_ids, add_specs;
  std::string add_scale = "likert5", actions_file;
  auto* act = criteria->add_subcommand("act", "Apply human actions to a draft set, in command-line order");
  act->add_option("--set", set_id, "Criteria set id")->required()->envname("COEVAL_SET");
  auto* opt_approve = act->add_option("--approve", approve_ids, "Approve criterion ID");
  auto* opt_revise = act->add_option("--revise", revise_specs, "ID=new statement");
  auto* opt_delete = act->add_option("--delete", delete_ids, "Delete criterion ID");
  auto* opt_add = act->add_option("--add", add_specs, "'Name: statement' of a missing criterion");
  act->add_option("--add-scale", add_scale, "Scale for added criteria")->capture_default_str();
  act->add_option("--actions", actions_file, "JSON array or JSON-lines of actions")->check(CLI::ExistingFile);
  for (auto* o : {opt_approve, opt_revise, opt_delete, opt_add}) o->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  act->callback([&] {
    action = [&] {
      std::vector<HumanAction> actions;
      if (!actions_file.empty()) actions = read_actions_file(actions_file);
      ScoreScale scale;
      switch (parse_scale_kind(add_scale)) {
        case ScaleKind::likert5: scale = ScoreScale::likert5(); break;
        case ScaleKind::level3: scale = ScoreScale::level3(); break;
        case ScaleKind::categorical3: scale = ScoreScale::categorical3(); break;
      }
      std::map<const CLI::Option*, std::size_t> taken;
      for (const auto* o : act->parse_order()) {
        const auto k = taken[o]++;
        if (o == opt_approve) {
          actions.push_back(HumanAction::approve(g.actor, approve_ids.at(k)));
        } else if (o == opt_delete) {
          actions.push_back(HumanAction::remove(g.actor, delete_ids.at(k)));
        } else if (o == opt_revise) {
          const auto [id, statement] = split_assignment(revise_specs.at(k), "--revise");
          actions.push_back(HumanAction::need_to_improve(g.actor, id, statement));
        } else if (o == opt_add) {
          const auto& spec = add_specs.at(k);
          const auto colon = spec.find(':');
          if (colon == std::string::npos) throw UsageError("--add expects 'Name: statement'");
          actions.push_back(
              HumanAction::add(g.actor, text::trim(spec.substr(0, colon)), text::trim(spec.substr(colon + 1)), scale));
        }
      }
      if (actions.empty()) throw UsageError("no actions given");
      auto ws = open_workspace(g);
      CriteriaSet result;
      for (auto a : actions) {
        if (a.actor.empty()) a.actor = g.actor;
        result = ws->apply_action(set_id, std::move(a));
      }
      print(g, json(result), "applied " + std::to_string(actions.size()) + " actions\n" + describe_set(result));
      return kExitOk;
    };
  });

  auto* finalize = criteria->add_subcommand("finalize", "Finalize a fully scrutinized set");
  finalize->add_option("--set", set_id, "Criteria set id")->required()->envname("COEVAL_SET");
  finalize->callback([&] {
    action = [&] {
      const auto s = open_workspace(g)->finalize_set(set_id);
      print(g, json(s), "finalized " + describe_set(s));
      return kExitOk;
    };
  });

  auto* show = criteria->add_subcommand("show", "Print a criteria set");
  show->add_option("--set", set_id, "Criteria set id")->required()->envname("COEVAL_SET");
  show->callback([&] {
    action = [&] {
      const auto s = open_workspace(g)->read([&](const State& st) { return st.set(set_id); });
      print(g, json(s), describe_set(s));
      return kExitOk;
    };
  });

  std::vector<std::string> alignment_sets;
  auto* alignment = criteria->add_subcommand("alignment", "Approval / improve / deletion / missing rates");
  alignment->add_option("--set", alignment_sets, "Finalized set ids")->required();
  alignment->callback([&] {
    action = [&] {
      auto ws = open_workspace(g);
      std::vector<std::pair<std::string, AlignmentRates>> rows;
      json out = json::array();
      for (const auto& id : alignment_sets) {
        rows.emplace_back(id, ws->alignment(id));
        out.push_back(json{{"set_id", id}, {"rates", rows.back().second}});
      }
      print(g, out, render_alignment_table(rows));
      return kExitOk;
    };
  });

  auto* consistency = criteria->add_subcommand("consistency", "CC / ICC per draft batch");
  consistency->add_option("--task", task_id, "Only batches of this task");
  consistency->callback([&] {
    action = [&] {
      std::vector<DraftBatch> batches;
      open_workspace(g)->read([&](const State& s) {
        for (const auto& [id, b] : s.batches)
          if (task_id.empty() || b.task_id == task_id) batches.push_back(b);
        return 0;
      });
      print(g, json(batches), render_consistency_table(batches));
      return kExitOk;
    };
  });

  // ---- eval --------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Evaluation runs");
  eval->require_subcommand(1);
  std::string mode = "step", samples_csv, out_log;
  bool progress = false;
  auto* eval_run = eval->add_subcommand("run", "Evaluate samples directly or step by step");
  eval_run->add_option("--task", task_id, "Task id")->required()->envname("COEVAL_TASK");
  eval_run->add_option("--mode", mode, "direct | step | step_human")
      ->envname("COEVAL_MODE")
      ->capture_default_str()
      ->check(CLI::IsMember({"direct", "step", "step_human", "step_by_step", "step_by_step_human"}));
  eval_run->add_option("--set", set_id, "Finalized criteria set (step modes)")->envname("COEVAL_SET");
  eval_run->add_option("--samples", samples_csv, "Comma-separated sample ids (default all)");
  eval_run->add_option("--out", out_log, "Session log to write (defaults to --log)")->envname("COEVAL_OUT");
  eval_run->add_flag("--progress", progress, "Report progress on stderr");
  eval_run->callback([&] {
    action = [&] {
      auto ws = open_workspace(g, out_log);
      std::optional<std::string> set;
      if (!set_id.empty()) set = set_id;
      const auto run = ws->create_run(task_id, set, parse_eval_mode(mode), split_commas(samples_csv));
      const auto done = ws->execute_run(run.id, [&](const ProgressEvent& e) {
        if (progress) std::cerr << "\r" << e.completed << "/" << e.total << std::flush;
      });
      if (progress) std::cerr << '\n';
      std::map<std::string, int> counts;
      for (const auto& st : done.statuses) ++counts[std::string(to_string(st.state))];
      std::ostringstream human;
      human << "run " << done.id << ":";
      for (const auto& [k, v] : counts) human << " " << v << " " << k;
      human << '\n';
      print(g, json{{"run", done}, {"counts", counts}}, human.str());
      return counts.count("failed") ? kExitData : kExitOk;
    };
  });

  std::string evaluation;
  auto* eval_show = eval->add_subcommand("show", "Print the draft and final versions of an evaluation");
  eval_show->add_option("--evaluation", evaluation, "Evaluation id (<run>-<sample>)")->required();
  eval_show->callback([&] {
    action = [&] {
      const auto out = open_workspace(g)->read([&](const State& s) {
        json j{{"draft", s.draft(evaluation)}};
        if (auto it = s.finals.find(evaluation); it != s.finals.end()) j["final"] = it->second;
        return j;
      });
      print(g, out, out.dump(2) + "\n");
      return kExitOk;
    };
  });

  std::vector<std::string> score_edits, explanation_edits;
  std::optional<int> overall_score;
  std::string overall_explanation, edits_file;
  auto* eval_finalize = eval->add_subcommand("finalize", "Record an annotator's final version of a draft");
  eval_finalize->add_option("--evaluation", evaluation, "Evaluation id (<run>-<sample>)")->required();
  eval_finalize->add_option("--score", score_edits, "CRITERION=SCORE")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  eval_finalize->add_option("--explain", explanation_edits, "CRITERION=TEXT")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  eval_finalize->add_option("--overall", overall_score, "New overall score");
  eval_finalize->add_option("--overall-explanation", overall_explanation, "New overall explanation");
  eval_finalize->add_option("--edits", edits_file, "JSON array or JSON-lines of edit actions")->check(CLI::ExistingFile);
  eval_finalize->callback([&] {
    action = [&] {
      auto ws = open_workspace(g);
      const auto sample = ws->read([&](const State& s) { return s.draft(evaluation).sample_id; });
      std::vector<HumanAction> edits;
      if (!edits_file.empty()) edits = read_actions_file(edits_file);
      for (const auto& spec : score_edits) {
        const auto [crit, value] = split_assignment(spec, "--score");
        int score;
        try {
          score = std::stoi(value);
        } catch (const std::exception&) {
          throw UsageError("--score expects an integer, got '" + value + "'");
        }
        edits.push_back(HumanAction::edit_score(g.actor, CellRef{sample, crit}, score));
      }
      for (const auto& spec : explanation_edits) {
        const auto [crit, value] = split_assignment(spec, "--explain");
        edits.push_back(HumanAction::edit_explanation(g.actor, CellRef{sample, crit}, value));
      }
      if (overall_score) edits.push_back(HumanAction::edit_score(g.actor, OverallRef{sample}, *overall_score));
      if (!overall_explanation.empty())
        edits.push_back(HumanAction::edit_explanation(g.actor, OverallRef{sample}, overall_explanation));
      const auto final_eval = ws->finalize_evaluation(evaluation, edits, g.actor);
      print(g, json(final_eval),
            "finalized " + final_eval.id + " with " + std::to_string(edits.size()) + " edits, overall " +
                std::to_string(final_eval.overall_score) + "\n");
      return kExitOk;
    };
  });

  // ---- report ------------------------------------------------------------
  auto* report = app.add_subcommand("report", "Meta-evaluation reports over a run");
  std::string kind_name, run_id, human_scores, metric, csv_dir;
  double high_agreement = 0.7;
  report->add_option("kind", kind_name, "correlations | agreement | distribution | behavior")
      ->required()
      ->check(CLI::IsMember({"correlations", "agreement", "distribution", "behavior"}));
  report->add_option("--run", run_id, "Run id")->required()->envname("COEVAL_RUN");
  report->add_option("--human-scores", human_scores, "CSV of item,rater,score to import first")
      ->envname("COEVAL_HUMAN_SCORES")
      ->check(CLI::ExistingFile);
  report->add_option("--metric", metric, "Alpha metric: interval | ordinal | nominal")->envname("COEVAL_METRIC");
  report->add_option("--threshold", high_agreement, "High-agreement alpha threshold")->capture_default_str();
  report->add_option("--csv-dir", csv_dir, "Write CSV tables here")->envname("COEVAL_CSV_DIR");
  report->callback([&] {
    action = [&] {
      auto ws = open_workspace(g);
      if (!human_scores.empty()) ws->import_human_scores(run_id, parse_human_scores_csv(read_text_file(human_scores)));
      ReportOptions options;
      if (!metric.empty()) options.metric = parse_alpha_metric(metric);
      options.high_agreement = high_agreement;
      const auto kind = parse_report_kind(kind_name);
      const auto payload = ws->compute_report(run_id, kind, options);
      if (!csv_dir.empty()) {
        std::filesystem::create_directories(csv_dir);
        for (const auto& [name, content] : report_csv_files(kind, payload)) {
          std::ofstream out(std::filesystem::path(csv_dir) / name, std::ios::binary);
          out << content;
          if (!out) throw Error(Errc::io_error, "cannot write " + name);
        }
      }
      print(g, payload, render_report_table(kind, payload));
      return kExitOk;
    };
  });

  // ---- log / export ------------------------------------------------------
  auto* log_cmd = app.add_subcommand("log", "Session log maintenance");
  log_cmd->require_subcommand(1);
  auto* verify = log_cmd->add_subcommand("verify", "Replay the log and print a state digest");
  verify->callback([&] {
    action = [&] {
      const auto contents = read_log(g.log);
      const auto state = replay(contents.records);
      json out{{"records", contents.records.size()},
               {"last_seq", state.last_seq},
               {"dropped_partial_tail", contents.dropped_partial_tail},
               {"tasks", state.tasks.size()},
               {"criteria_sets", state.sets.size()},
               {"runs", state.runs.size()},
               {"evaluations", state.drafts.size()},
               {"finals", state.finals.size()},
               {"digest", state_digest(state)}};
      std::ostringstream human;
      human << contents.records.size() << " records, last seq " << state.last_seq << ", digest "
            << out["digest"].get<std::string>() << '\n';
      print(g, out, human.str());
      return kExitOk;
    };
  });

  std::string export_dir;
  auto* export_cmd = app.add_subcommand("export", "Write per-table CSVs of the replayed state");
  export_cmd->add_option("--dir", export_dir, "Output directory")->required()->envname("COEVAL_EXPORT_DIR");
  export_cmd->callback([&] {
    action = [&] {
      const auto state = replay(read_log(g.log).records);
      const auto files = export_csv(state, export_dir);
      std::string human;
      for (const auto& f : files) human += f + "\n";
      print(g, json(files), human);
      return kExitOk;
    };
  });

  // ---- servers -----------------------------------------------------------
  std::string host = "127.0.0.1", script;
  int port = 8080;
  auto* mock = app.add_subcommand("mock", "Offline provider");
  mock->require_subcommand(1);
  auto* mock_serve = mock->add_subcommand("serve", "Serve OpenAI-compatible routes from a script");
  mock_serve->add_option("--script", script, "JSON-lines script or transcript")->required()->check(CLI::ExistingFile);
  mock_serve->add_option("--host", host)->envname("COEVAL_HOST")->capture_default_str();
  mock_serve->add_option("--port", port)->envname("COEVAL_PORT")->capture_default_str();
  mock_serve->callback([&] {
    action = [&] {
      MockServer server(ScriptedProvider::load(script), std::make_shared<HashingEmbedder>(), load_prompts(g));
      spdlog::info("mock provider on {}:{}", host, port);
      server.listen(host, port);
      return kExitOk;
    };
  });

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::optional<std::string> serve_host;
  std::optional<int> serve_port;
  serve->add_option("--host", serve_host)->envname("COEVAL_HOST");
  serve->add_option("--port", serve_port)->envname("COEVAL_PORT");
  serve->callback([&] {
    action = [&] {
      ServiceConfig cfg;
      if (!g.config.empty()) cfg = parse_service_config(read_json_file(g.config).value("service", json::object()));
      if (serve_host) cfg.host = *serve_host;
      if (serve_port) cfg.port = *serve_port;
      if (cfg.tokens.empty()) spdlog::warn("no API tokens configured; every request will be rejected");
      auto ws = open_workspace(g);
      Service service(*ws, cfg);
      service.listen();
      return kExitOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("coeval"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  if (!g.config.empty()) apply_config(g, read_json_file(g.config));
  return action();
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    if (!e.details().empty()) std::cerr << e.details().dump() << '\n';
    return is_provider_error(e.code()) ? kExitProvider : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
