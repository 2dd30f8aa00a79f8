#include <gtest/gtest.h>

#include <atomic>
#include <numeric>
#include <thread>

#include "coeval/error.hpp"
#include "coeval/evaluation.hpp"
#include "test_support.hpp"

using namespace coeval;
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

Task task_with(int n) {
  Task t{"t1", "Write an ending", "start", "end", {}};
  for (int i = 1; i <= n; ++i)
    t.samples.push_back({"s" + std::to_string(i), "input " + std::to_string(i), "output " + std::to_string(i), {}});
  return t;
}

CriteriaSet finalized_set(const std::string& task_id = "t1") {
  std::vector<Criterion> cs{Criterion{"", "Coherence", "flows", ScoreScale::likert5()},
                            Criterion{"", "Fluency", "reads well", ScoreScale::likert5()},
                            Criterion{"", "Correctness", "is right", ScoreScale::level3()}};
  auto set = make_draft_set("d1-det", task_id, cs, {Provenance::Kind::deterministic_draft, 0}, 0.0);
  for (std::size_t i = 0; i < set.criteria.size(); ++i)
    set = apply_action(set, HumanAction::approve("e", set.criteria[i].id));
  return finalize(set);
}

/// Criterion prompts answer by criterion name; the overall prompt echoes
/// whether it saw the history.
std::shared_ptr<FunctionProvider> step_provider(std::atomic<int>* calls = nullptr) {
  return std::make_shared<FunctionProvider>([calls](const CompletionRequest& r) {
    if (calls) ++*calls;
    const auto& p = r.prompt.text;
    if (r.prompt.kind == PromptKind::criterion_eval) {
      if (p.find("Coherence") != std::string::npos) return ts::reply("1. It flows.\n2. Score: 4");
      if (p.find("Fluency") != std::string::npos) return ts::reply("Smooth.\nScore: 5 out of 5");
      return ts::reply("Mostly right.\nScore: 2/3");
    }
    if (r.prompt.kind == PromptKind::overall_step_by_step) {
      EXPECT_NE(p.find("Criterion: Coherence: flows\nEvaluation: It flows.\nScore: 4"), std::string::npos);
      EXPECT_NE(p.find("Criterion: Correctness: is right\nEvaluation: Mostly right.\nScore: 2"), std::string::npos);
      return ts::reply("1. Good overall.\n2. Overall score: 4");
    }
    return ts::reply("Score: 3");
  });
}

}  // namespace

TEST(Evaluate, DirectUsesOneCall) {
  std::atomic<int> calls{0};
  auto g = ts::gateway(std::make_shared<FunctionProvider>([&](const CompletionRequest& r) {
    ++calls;
    EXPECT_EQ(r.prompt.kind, PromptKind::overall_direct);
    EXPECT_EQ(r.temperature, 0.0);
    return ts::reply("I would give 3 out of 5.");
  }));
  const auto t = task_with(1);
  const auto ev = evaluate_direct(*g, ts::prompts(), t, t.samples[0], {});
  EXPECT_EQ(calls.load(), 1);
  EXPECT_EQ(ev.overall_score, 3);
  EXPECT_EQ(ev.mode, EvalMode::direct);
  EXPECT_TRUE(ev.criterion_evals.empty());
  EXPECT_EQ(ev.overall_raw, "I would give 3 out of 5.");
}

TEST(Evaluate, StepByStepCarriesHistoryIntoOverall) {
  std::atomic<int> calls{0};
  auto g = ts::gateway(step_provider(&calls));
  const auto t = task_with(1);
  const auto set = finalized_set();
  const auto ev = evaluate_step_by_step(*g, ts::prompts(), t, t.samples[0], set, {});
  EXPECT_EQ(calls.load(), 4);
  ASSERT_EQ(ev.criterion_evals.size(), 3u);
  EXPECT_EQ(ev.criterion_evals[0].criterion_id, set.criteria[0].id);
  EXPECT_EQ(ev.criterion_evals[0].score, 4);
  EXPECT_EQ(ev.criterion_evals[0].explanation, "It flows.");
  EXPECT_EQ(ev.criterion_evals[1].score, 5);
  EXPECT_EQ(ev.criterion_evals[2].score, 2);
  EXPECT_EQ(ev.overall_score, 4);
  EXPECT_EQ(ev.overall_explanation, "Good overall.");
  EXPECT_EQ(ev.version.kind, EvalVersion::Kind::llm_draft);
  EXPECT_TRUE(ev.missing_criteria.empty());
}

TEST(Evaluate, ReaskOnceThenMarkMissing) {
  std::atomic<int> fluency_calls{0};
  auto g = ts::gateway(std::make_shared<FunctionProvider>([&](const CompletionRequest& r) {
    const auto& p = r.prompt.text;
    if (r.prompt.kind == PromptKind::criterion_eval) {
      if (p.find("Fluency") != std::string::npos) {
        ++fluency_calls;
        return ts::reply("It reads well but I will not score it.");
      }
      if (p.find("Coherence") != std::string::npos)
        return ts::reply(r.seed_hint == 1 ? "Score: 4" : "Score: 7");  // out of range, then fixed
      return ts::reply("Score: 3");
    }
    EXPECT_EQ(p.find("Fluency"), std::string::npos);  // missing cell is not replayed
    return ts::reply("Score: 4");
  }));
  const auto t = task_with(1);
  const auto set = finalized_set();
  const auto ev = evaluate_step_by_step(*g, ts::prompts(), t, t.samples[0], set, {});
  EXPECT_EQ(fluency_calls.load(), 2);
  EXPECT_EQ(ev.missing_criteria, std::vector<std::string>{set.criteria[1].id});
  ASSERT_EQ(ev.criterion_evals.size(), 2u);
  EXPECT_EQ(ev.criterion_evals[0].score, 4);
}

TEST(Evaluate, OverallFailureThrows) {
  auto g = ts::gateway(std::make_shared<FunctionProvider>([](const CompletionRequest& r) {
    return ts::reply(r.prompt.kind == PromptKind::criterion_eval ? "Score: 3" : "Cannot judge.");
  }));
  const auto t = task_with(1);
  EXPECT_EQ(code_of([&] { evaluate_step_by_step(*g, ts::prompts(), t, t.samples[0], finalized_set(), {}); }),
            Errc::no_score_found);
}

TEST(HumanFinalize, EditsProduceAFinalVersion) {
  auto g = ts::gateway(step_provider());
  const auto t = task_with(1);
  const auto set = finalized_set();
  auto draft = evaluate_step_by_step(*g, ts::prompts(), t, t.samples[0], set, {});
  draft.id = "r1-s1";
  const std::vector<HumanAction> edits{
      HumanAction::edit_score("ann", CellRef{"s1", set.criteria[0].id}, 3),
      HumanAction::edit_explanation("ann", OverallRef{"s1"}, "Decent."),
  };
  const auto fin = human_finalize_evaluation(draft, edits, "ann", set.criteria);
  EXPECT_EQ(fin.version, EvalVersion::human_final("ann"));
  EXPECT_EQ(fin.criterion_evals[0].score, 3);
  EXPECT_EQ(fin.criterion_evals[0].author, Author::annotator("ann"));
  EXPECT_EQ(fin.criterion_evals[1], draft.criterion_evals[1]);
  EXPECT_EQ(fin.overall_explanation, "Decent.");
  EXPECT_EQ(fin.overall_score, draft.overall_score);
  EXPECT_EQ(fin.edits, edits);

  const auto unchanged = human_finalize_evaluation(draft, {}, "ann", set.criteria);
  EXPECT_EQ(unchanged.criterion_evals, draft.criterion_evals);
  EXPECT_EQ(unchanged.overall_score, draft.overall_score);
}

TEST(HumanFinalize, Errors) {
  auto g = ts::gateway(step_provider());
  const auto t = task_with(1);
  const auto set = finalized_set();
  const auto draft = evaluate_step_by_step(*g, ts::prompts(), t, t.samples[0], set, {});
  auto one = [&](HumanAction a) {
    const std::vector<HumanAction> edits{std::move(a)};
    human_finalize_evaluation(draft, edits, "ann", set.criteria);
  };
  EXPECT_EQ(code_of([&] { one(HumanAction::edit_score("ann", OverallRef{"s1"}, 9)); }), Errc::score_out_of_scale);
  // Correctness is level3.
  EXPECT_EQ(code_of([&] { one(HumanAction::edit_score("ann", CellRef{"s1", set.criteria[2].id}, 4)); }),
            Errc::score_out_of_scale);
  EXPECT_EQ(code_of([&] { one(HumanAction::edit_score("ann", CellRef{"s1", "nope"}, 3)); }), Errc::unknown_cell);
  EXPECT_EQ(code_of([&] { one(HumanAction::edit_score("ann", CellRef{"s2", set.criteria[0].id}, 3)); }),
            Errc::unknown_cell);
  EXPECT_EQ(code_of([&] { one(HumanAction::approve("ann", "c1")); }), Errc::invalid_action);
  auto final_version = human_finalize_evaluation(draft, {}, "ann", set.criteria);
  EXPECT_EQ(code_of([&] { human_finalize_evaluation(final_version, {}, "ann", set.criteria); }), Errc::invalid_action);
}

TEST(ValidateRun, ModeAndSetMustAgree) {
  EvaluationRun direct{"r1", "t1", std::nullopt, EvalMode::direct, {"s1"}, {{}}};
  EXPECT_NO_THROW(validate_run(direct, nullptr));
  const auto set = finalized_set();
  auto direct_with_set = direct;
  direct_with_set.criteria_set_id = "d1-det";
  EXPECT_THROW(validate_run(direct_with_set, &set), Error);
  EvaluationRun step{"r1", "t1", "d1-det", EvalMode::step_by_step, {"s1"}, {{}}};
  EXPECT_THROW(validate_run(step, nullptr), Error);
  EXPECT_NO_THROW(validate_run(step, &set));
  const auto other = finalized_set("t2");
  EXPECT_THROW(validate_run(step, &other), Error);
  auto draft = make_draft_set("d1-det", "t1", {Criterion{"", "A", "a", ScoreScale::likert5()}},
                              {Provenance::Kind::deterministic_draft, 0}, 0.0);
  EXPECT_THROW(validate_run(step, &draft), Error);
}

TEST(RunBatch, OutcomesArriveInSampleOrderWithFailuresRecorded) {
  // Later samples answer faster, and s3 never yields a score.
  auto g = ts::gateway(std::make_shared<FunctionProvider>([](const CompletionRequest& r) {
                         const auto& p = r.prompt.text;
                         const auto pos = p.find("input ");
                         const int k = std::stoi(p.substr(pos + 6));
                         std::this_thread::sleep_for(std::chrono::milliseconds(2 * (12 - k)));
                         return ts::reply(k == 3 ? "No idea." : "Score: " + std::to_string(1 + k % 5));
                       }),
                       6);
  const auto t = task_with(12);
  EvaluationRun run{"r1", "t1", std::nullopt, EvalMode::direct, {}, {}};
  for (const auto& s : t.samples) run.sample_ids.push_back(s.id);
  run.statuses.assign(run.sample_ids.size(), {});
  const auto lib = ts::prompts();
  BatchContext ctx{*g, lib, t, nullptr, {}, {}, {}};
  std::vector<std::size_t> order;
  std::atomic<std::size_t> progress{0};
  ctx.on_outcome = [&](const SampleOutcome& o) { order.push_back(o.index); };
  ctx.on_progress = [&](const ProgressEvent& e) {
    EXPECT_EQ(e.total, 12u);
    ++progress;
  };
  const auto done = run_batch(run, ctx);
  std::vector<std::size_t> expected(12);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(order, expected);
  EXPECT_EQ(progress.load(), 12u);
  EXPECT_EQ(done.statuses[2], (SampleStatus{SampleState::failed, "NoScoreFound"}));
  EXPECT_EQ(done.statuses[0].state, SampleState::llm_drafted);
  EXPECT_EQ(code_of([&] { run_batch(done, ctx); }), Errc::already_run);
}

TEST(RunBatch, StepModeEvaluatesEveryCriterion) {
  auto g = ts::gateway(step_provider());
  const auto t = task_with(3);
  const auto set = finalized_set();
  EvaluationRun run{"r9", "t1", set.id, EvalMode::step_by_step, {"s1", "s2", "s3"}, {{}, {}, {}}};
  const auto lib = ts::prompts();
  BatchContext ctx{*g, lib, t, &set, {}, {}, {}};
  std::vector<SampleEvaluation> evals;
  ctx.on_outcome = [&](const SampleOutcome& o) { evals.push_back(*o.evaluation); };
  run_batch(run, ctx);
  ASSERT_EQ(evals.size(), 3u);
  EXPECT_EQ(evals[1].id, evaluation_id("r9", "s2"));
  EXPECT_EQ(evals[1].id, "r9-s2");
  for (const auto& e : evals) EXPECT_EQ(e.criterion_evals.size(), 3u);
}
