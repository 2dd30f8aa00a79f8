#include "coeval/evaluation.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "coeval/error.hpp"
#include "coeval/score_extractor.hpp"
#include "coeval/text.hpp"

namespace coeval {

std::string evaluation_id(const std::string& run_id, const std::string& sample_id) {
  return run_id + "-" + sample_id;
}

namespace {

CompletionRequest make_request(const EvalOptions& options, RenderedPrompt prompt) {
  CompletionRequest req;
  req.model = options.model;
  req.prompt = std::move(prompt);
  req.temperature = options.temperature;
  req.max_output_tokens = options.max_output_tokens;
  return req;
}

bool is_extraction_failure(Errc code) { return code == Errc::no_score_found || code == Errc::out_of_range; }

}  // namespace

SampleEvaluation evaluate_direct(Gateway& gateway, const PromptLibrary& prompts, const Task& task,
                                 const Sample& sample, const EvalOptions& options) {
  const auto response = gateway.complete(make_request(options, prompts.render_direct_prompt(task, sample)));
  const auto extracted = extract_score(response.text, options.overall_scale);

  SampleEvaluation eval;
  eval.sample_id = sample.id;
  eval.overall_score = extracted.score;
  eval.overall_explanation = text::trim(response.text);
  eval.overall_raw = response.text;
  eval.mode = EvalMode::direct;
  return eval;
}

SampleEvaluation evaluate_step_by_step(Gateway& gateway, const PromptLibrary& prompts, const Task& task,
                                       const Sample& sample, const CriteriaSet& criteria,
                                       const EvalOptions& options) {
  if (!criteria.finalized()) throw Error(Errc::invalid_argument, "criteria set " + criteria.id + " is not finalized");
  if (criteria.criteria.empty()) throw Error(Errc::empty_set, "criteria set " + criteria.id + " is empty");

  SampleEvaluation eval;
  eval.sample_id = sample.id;
  eval.mode = EvalMode::step_by_step;

  std::vector<HistoryEntry> history;
  for (const auto& criterion : criteria.criteria) {
    auto request = make_request(options, prompts.render_criterion_eval_prompt(task, sample, criterion));
    std::optional<SplitEvaluation> split;
    std::string raw;
    for (int attempt = 0; attempt < 2 && !split; ++attempt) {
      if (attempt == 1) request.seed_hint = 1;
      raw = gateway.complete(request).text;
      try {
        split = split_evaluation(raw, criterion.scale);
      } catch (const Error& e) {
        if (!is_extraction_failure(e.code())) throw;
        spdlog::debug("sample {} criterion {}: {} (attempt {})", sample.id, criterion.id, e.what(), attempt + 1);
      }
    }
    if (!split) {
      eval.missing_criteria.push_back(criterion.id);
      continue;
    }
    CriterionEvaluation ce;
    ce.criterion_id = criterion.id;
    ce.explanation = split->explanation;
    ce.score = split->extraction.score;
    ce.raw_llm_text = raw;
    history.push_back({criterion.text(), ce.explanation, ce.score});
    eval.criterion_evals.push_back(std::move(ce));
  }

  if (history.empty())
    throw Error(Errc::no_score_found, "no criterion score could be extracted for sample " + sample.id);
  const auto response = gateway.complete(
      make_request(options, prompts.render_overall_prompt(task, sample, history, options.overall_scale)));
  const auto overall = split_evaluation(response.text, options.overall_scale);
  eval.overall_score = overall.extraction.score;
  eval.overall_explanation = overall.explanation;
  eval.overall_raw = response.text;
  return eval;
}

SampleEvaluation human_finalize_evaluation(const SampleEvaluation& draft, std::span<const HumanAction> edits,
                                           const std::string& annotator, std::span<const Criterion> criteria,
                                           const ScoreScale& overall_scale) {
  if (draft.version.kind != EvalVersion::Kind::llm_draft)
    throw Error(Errc::invalid_action, "only an llm_draft evaluation can be finalized");

  SampleEvaluation out = draft;
  out.version = EvalVersion::human_final(annotator);
  out.edits.assign(edits.begin(), edits.end());

  auto find_cell = [&](const CellRef& ref) -> CriterionEvaluation& {
    for (auto& ce : out.criterion_evals)
      if (ce.criterion_id == ref.criterion_id) return ce;
    throw Error(Errc::unknown_cell, "no evaluation cell for criterion " + ref.criterion_id,
                {{"sample_id", ref.sample_id}, {"criterion_id", ref.criterion_id}});
  };
  auto scale_of = [&](const std::string& criterion_id) {
    for (const auto& c : criteria)
      if (c.id == criterion_id) return c.scale;
    throw Error(Errc::unknown_cell, "criterion " + criterion_id + " is not in the run's criteria set");
  };
  auto check_score = [](int score, const ScoreScale& scale) {
    if (!scale.contains(score))
      throw Error(Errc::score_out_of_scale,
                  "score " + std::to_string(score) + " is outside " + std::to_string(scale.min) + ".." +
                      std::to_string(scale.max),
                  {{"score", score}, {"min", scale.min}, {"max", scale.max}});
  };

  for (const auto& edit : edits) {
    const auto* edit_score = std::get_if<action::EditScore>(&edit.kind);
    const auto* edit_text = std::get_if<action::EditExplanation>(&edit.kind);
    if (!edit_score && !edit_text)
      throw Error(Errc::invalid_action, std::string("action ") + std::string(action_name(edit.kind)) +
                                            " is not an evaluation edit");

    if (const auto* cell = std::get_if<CellRef>(&edit.target)) {
      if (cell->sample_id != draft.sample_id)
        throw Error(Errc::unknown_cell, "edit targets sample " + cell->sample_id + ", not " + draft.sample_id);
      auto& ce = find_cell(*cell);
      if (edit_score) {
        check_score(edit_score->new_score, scale_of(cell->criterion_id));
        ce.score = edit_score->new_score;
      } else {
        ce.explanation = edit_text->new_text;
      }
      ce.author = Author::annotator(annotator);
    } else if (const auto* overall = std::get_if<OverallRef>(&edit.target)) {
      if (overall->sample_id != draft.sample_id)
        throw Error(Errc::unknown_cell, "edit targets sample " + overall->sample_id + ", not " + draft.sample_id);
      if (edit_score) {
        check_score(edit_score->new_score, overall_scale);
        out.overall_score = edit_score->new_score;
      } else {
        out.overall_explanation = edit_text->new_text;
      }
    } else {
      throw Error(Errc::unknown_cell, "evaluation edits must target a cell or the overall score");
    }
  }
  return out;
}

void validate_run(const EvaluationRun& run, const CriteriaSet* criteria) {
  if (run.sample_ids.size() != run.statuses.size())
    throw Error(Errc::invalid_argument, "run " + run.id + " has mismatched sample and status lists");
  if (run.mode == EvalMode::direct) {
    if (run.criteria_set_id) throw Error(Errc::invalid_argument, "direct runs take no criteria set");
    return;
  }
  if (!run.criteria_set_id || !criteria || criteria->id != *run.criteria_set_id)
    throw Error(Errc::invalid_argument, "step-by-step runs need their criteria set");
  if (!criteria->finalized())
    throw Error(Errc::invalid_argument, "criteria set " + criteria->id + " is not finalized");
  if (criteria->criteria.empty()) throw Error(Errc::empty_set, "criteria set " + criteria->id + " is empty");
  if (criteria->task_id != run.task_id)
    throw Error(Errc::invalid_argument, "criteria set " + criteria->id + " belongs to another task");
}

EvaluationRun run_batch(const EvaluationRun& run, BatchContext& ctx) {
  if (!run.all_pending()) throw Error(Errc::already_run, "run " + run.id + " has already been executed");
  validate_run(run, ctx.criteria);

  const auto total = run.sample_ids.size();
  EvaluationRun out = run;

  auto evaluate_one = [&](std::size_t index) {
    SampleOutcome outcome;
    outcome.index = index;
    outcome.sample_id = run.sample_ids[index];
    try {
      const auto* sample = ctx.task.find_sample(outcome.sample_id);
      if (!sample) throw Error(Errc::not_found, "unknown sample " + outcome.sample_id);
      auto eval = run.mode == EvalMode::direct
                      ? evaluate_direct(ctx.gateway, ctx.prompts, ctx.task, *sample, ctx.options)
                      : evaluate_step_by_step(ctx.gateway, ctx.prompts, ctx.task, *sample, *ctx.criteria, ctx.options);
      eval.id = evaluation_id(run.id, sample->id);
      eval.run_id = run.id;
      eval.mode = run.mode;
      outcome.evaluation = std::move(eval);
      outcome.status = {SampleState::llm_drafted, {}};
    } catch (const Error& e) {
      spdlog::warn("run {} sample {} failed: {}", run.id, outcome.sample_id, e.what());
      outcome.status = {SampleState::failed, std::string(to_string(e.code()))};
    } catch (const std::exception& e) {
      spdlog::error("run {} sample {} failed unexpectedly: {}", run.id, outcome.sample_id, e.what());
      outcome.status = {SampleState::failed, "internal"};
    }
    return outcome;
  };

  // Reorder buffer: outcomes are handed to the sink strictly in sample order.
  std::mutex mutex;
  std::map<std::size_t, SampleOutcome> ready;
  std::size_t next_to_emit = 0;
  std::size_t completed = 0;
  std::atomic<std::size_t> next_index{0};
  std::exception_ptr sink_error;

  auto worker = [&] {
    for (;;) {
      const auto index = next_index.fetch_add(1);
      if (index >= total) return;
      auto outcome = evaluate_one(index);
      std::lock_guard lock(mutex);
      if (sink_error) return;
      ++completed;
      if (ctx.on_progress) ctx.on_progress({run.id, outcome.sample_id, outcome.status, completed, total});
      ready.emplace(index, std::move(outcome));
      for (auto it = ready.find(next_to_emit); it != ready.end(); it = ready.find(next_to_emit)) {
        out.statuses[it->first] = it->second.status;
        try {
          if (ctx.on_outcome) ctx.on_outcome(it->second);
        } catch (...) {
          sink_error = std::current_exception();
          next_index.store(total);
          return;
        }
        ready.erase(it);
        ++next_to_emit;
      }
    }
  };

  const auto workers = std::min<std::size_t>(total, static_cast<std::size_t>(std::max(1, ctx.gateway.max_in_flight())));
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (sink_error) std::rethrow_exception(sink_error);
  return out;
}

}  // namespace coeval
