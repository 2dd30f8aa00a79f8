#include <gtest/gtest.h>

#include "coeval/error.hpp"
#include "coeval/workspace.hpp"
#include "test_support.hpp"

using namespace coeval;
using nlohmann::json;
namespace ts = testing_support;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::io_error;
}

Task story_task(int n) {
  Task t{"", "Write an ending for the story", "Tom lost his keys.", "He found them in the fridge.", {}};
  for (int i = 1; i <= n; ++i)
    t.samples.push_back({"", "Story " + std::to_string(i), "Ending " + std::to_string(i),
                         i % 2 ? SampleSource::model("gpt-4") : SampleSource::human_reference()});
  return t;
}

/// Criteria lists vary with the seed; evaluations answer by criterion name.
std::shared_ptr<FunctionProvider> pipeline_provider() {
  return std::make_shared<FunctionProvider>([](const CompletionRequest& r) {
    const auto& p = r.prompt.text;
    switch (r.prompt.kind) {
      case PromptKind::criteria_generation:
        if (r.seed_hint.value_or(0) % 2)
          return ts::reply("1. Coherence: The ending follows the story.\n2. Creativity: The ending surprises.");
        return ts::reply(
            "1. Coherence: The ending follows from the story.\n2. Fluency: The text reads smoothly.\n"
            "3. Relevance: The ending stays on topic.");
      case PromptKind::criterion_eval:
        if (p.find("Coherence") != std::string::npos) return ts::reply("1. Follows on.\n2. Score: 4");
        if (p.find("Fluency") != std::string::npos) return ts::reply("1. Smooth.\n2. Score: 5");
        return ts::reply("1. On topic.\n2. Score: 3");
      default: return ts::reply("1. Solid.\n2. Overall score: 4");
    }
  });
}

WorkspaceOptions options_for(const std::filesystem::path& log) {
  WorkspaceOptions o;
  o.log_path = log;
  o.clock = ts::fixed_clock();
  o.model = "test-model";
  return o;
}

/// Import, draft, curate, finalize, run, edit, import humans, report.
std::string run_pipeline(Workspace& ws) {
  const auto task_id = ws.import_task(story_task(4));
  const auto batch = ws.draft_criteria(task_id, 3, 0.7);
  const auto set_id = batch.deterministic_set_id;
  const auto set = ws.read([&](const State& s) { return s.set(set_id); });
  ws.apply_action(set_id, HumanAction::approve("expert", set.criteria[0].id));
  ws.apply_action(set_id, HumanAction::need_to_improve("expert", set.criteria[1].id, "The text reads well aloud."));
  ws.apply_action(set_id, HumanAction::remove("expert", set.criteria[2].id));
  ws.apply_action(set_id, HumanAction::add("expert", "Relevance", "The ending stays on topic."));
  ws.finalize_set(set_id);

  const auto run = ws.create_run(task_id, set_id, EvalMode::step_by_step_human);
  ws.execute_run(run.id);
  const auto final_set = ws.read([&](const State& s) { return s.set(set_id); });
  ws.finalize_evaluation(evaluation_id(run.id, "s1"),
                         {HumanAction::edit_score("ann", CellRef{"s1", final_set.criteria[0].id}, 2),
                          HumanAction::edit_score("ann", OverallRef{"s1"}, 3)},
                         "ann");
  std::vector<HumanScore> scores;
  for (const auto& sample : run.sample_ids)
    for (const auto& rater : {"h1", "h2", "h3"})
      scores.push_back(HumanScore{sample + "/overall", rater, sample == "s2" ? 2 : 4});
  scores.push_back({"s1/Coherence", "h1", 3});
  ws.import_human_scores(run.id, scores);
  for (auto kind : {ReportKind::correlations, ReportKind::agreement, ReportKind::distribution, ReportKind::behavior})
    ws.compute_report(run.id, kind);
  return run.id;
}

}  // namespace

TEST(Workspace, LiveStateEqualsReplayOfTheLog) {
  ts::TempDir dir;
  const auto log = dir / "session.jsonl";
  State live;
  {
    Workspace ws(options_for(log), ts::gateway(pipeline_provider()), ts::prompts());
    run_pipeline(ws);
    live = ws.snapshot();
  }
  const auto replayed = replay(read_log(log).records);
  EXPECT_TRUE(replayed == live);
  EXPECT_EQ(state_digest(replayed), state_digest(live));

  // Reopening restores the state and continues the id sequences.
  Workspace reopened(options_for(log), ts::gateway(pipeline_provider()), ts::prompts());
  EXPECT_TRUE(reopened.snapshot() == live);
  EXPECT_EQ(reopened.import_task(story_task(1)), "t2");
  EXPECT_EQ(reopened.reserve_batch_id(), "d2");
}

TEST(Workspace, PipelineContentsAndAlignment) {
  ts::TempDir dir;
  Workspace ws(options_for(dir / "log.jsonl"), ts::gateway(pipeline_provider()), ts::prompts());
  const auto run_id = run_pipeline(ws);
  const auto state = ws.snapshot();

  ASSERT_EQ(state.batches.size(), 1u);
  const auto& batch = state.batches.begin()->second;
  EXPECT_EQ(batch.deterministic_set_id, "d1-det");
  EXPECT_EQ(batch.sampled_set_ids, (std::vector<std::string>{"d1-s1", "d1-s2", "d1-s3"}));

  const auto rates = ws.alignment("d1-det");
  EXPECT_DOUBLE_EQ(rates.approval, 0.25);
  EXPECT_DOUBLE_EQ(rates.need_to_improve, 0.25);
  EXPECT_DOUBLE_EQ(rates.deletion, 0.25);
  EXPECT_DOUBLE_EQ(rates.missing, 0.25);

  const auto& run = state.run(run_id);
  EXPECT_EQ(run.sample_ids, (std::vector<std::string>{"s1", "s2", "s3", "s4"}));
  for (const auto& status : run.statuses) EXPECT_NE(status.state, SampleState::failed);
  EXPECT_EQ(state.finals.at(evaluation_id(run_id, "s1")).overall_score, 3);
  EXPECT_EQ(state.draft(evaluation_id(run_id, "s1")).overall_score, 4);
  EXPECT_EQ(state.reports.size(), 4u);

  const auto behavior = state.reports.at(run_id + ":behavior");
  EXPECT_EQ(behavior.at("records").size(), 2u);  // only s1 has a human-final version
  EXPECT_EQ(code_of([&] { ws.execute_run(run_id); }), Errc::already_run);
  EXPECT_EQ(code_of([&] { ws.apply_action("d1-det", HumanAction::approve("e", "d1-det-c1")); }),
            Errc::set_already_finalized);
}

TEST(Workspace, IdenticalInputsGiveByteIdenticalLogs) {
  ts::TempDir a, b;
  {
    Workspace ws(options_for(a / "log.jsonl"), ts::gateway(pipeline_provider(), 8), ts::prompts());
    run_pipeline(ws);
  }
  {
    Workspace ws(options_for(b / "log.jsonl"), ts::gateway(pipeline_provider(), 1), ts::prompts());
    run_pipeline(ws);
  }
  EXPECT_EQ(ts::read_file(a / "log.jsonl"), ts::read_file(b / "log.jsonl"));
}

TEST(Workspace, HumanScoreImportIsValidated) {
  ts::TempDir dir;
  Workspace ws(options_for(dir / "log.jsonl"), ts::gateway(pipeline_provider()), ts::prompts());
  const auto run_id = run_pipeline(ws);
  const auto before = ws.snapshot().last_seq;
  EXPECT_EQ(code_of([&] { ws.import_human_scores(run_id, {{"s9/overall", "h1", 3}}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { ws.import_human_scores(run_id, {{"s1/Nonexistent", "h1", 3}}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { ws.import_human_scores(run_id, {{"no-slash", "h1", 3}}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { ws.import_human_scores(run_id, {{"s1/overall", "h1", 6}}); }), Errc::score_out_of_scale);
  EXPECT_EQ(code_of([&] { ws.import_human_scores("r9", {{"s1/overall", "h1", 3}}); }), Errc::not_found);
  EXPECT_EQ(ws.snapshot().last_seq, before);

  // A later import replaces the same rater's score for the same item.
  EXPECT_EQ(ws.import_human_scores(run_id, {{"s1/overall", "h1", 1}}), 1u);
  const auto scores = ws.snapshot().human_scores.at(run_id);
  const auto n = std::count_if(scores.begin(), scores.end(),
                               [](const HumanScore& s) { return s.item == "s1/overall" && s.rater == "h1"; });
  EXPECT_EQ(n, 1);
  const auto it = std::find_if(scores.begin(), scores.end(),
                               [](const HumanScore& s) { return s.item == "s1/overall" && s.rater == "h1"; });
  EXPECT_EQ(it->score, 1);
}

TEST(Workspace, ScoreMatrixAndCsvExport) {
  ts::TempDir dir;
  Workspace ws(options_for(dir / "log.jsonl"), ts::gateway(pipeline_provider()), ts::prompts());
  const auto run_id = run_pipeline(ws);
  const auto state = ws.snapshot();

  const auto m = build_score_matrix(state, run_id, ItemScope::overall);
  EXPECT_EQ(m.items.size(), 4u);
  ASSERT_TRUE(m.rater_index("llm"));
  ASSERT_TRUE(m.rater_index("hitl"));
  EXPECT_EQ(m.raters.size(), 5u);
  EXPECT_EQ(m.get(*m.rater_index("hitl"), *m.item_index("s1/overall")), 3);
  EXPECT_EQ(m.get(*m.rater_index("hitl"), *m.item_index("s2/overall")), std::nullopt);

  const auto all = build_score_matrix(state, run_id, ItemScope::all);
  EXPECT_EQ(all.items.size(), 4u * 4u);

  const auto files = export_csv(state, dir / "export");
  EXPECT_FALSE(files.empty());
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(dir / "export" / f)) << f;
  const auto overall = ts::read_file(dir / "export" / "overall.csv");
  EXPECT_NE(overall.find("s1"), std::string::npos);
}

TEST(Workspace, MissingTaskAndSetAreNotFound) {
  ts::TempDir dir;
  Workspace ws(options_for(dir / "log.jsonl"), ts::gateway(pipeline_provider()), ts::prompts());
  EXPECT_EQ(code_of([&] { ws.draft_criteria("t9", 2, 0.7); }), Errc::not_found);
  EXPECT_EQ(code_of([&] { ws.finalize_set("d9-det"); }), Errc::not_found);
  const auto task_id = ws.import_task(story_task(2));
  ws.draft_criteria(task_id, 2, 0.7);
  EXPECT_EQ(code_of([&] { ws.create_run(task_id, std::string("d1-det"), EvalMode::step_by_step); }),
            Errc::invalid_argument);
  auto nameless = story_task(1);
  nameless.description.clear();
  EXPECT_EQ(code_of([&] { ws.import_task(nameless); }), Errc::invalid_argument);
}
