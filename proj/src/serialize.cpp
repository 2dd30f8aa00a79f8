#include "coeval/serialize.hpp"

#include <array>
#include <cmath>

#include "coeval/error.hpp"

namespace coeval {

using nlohmann::json;

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<Enum, N>& values, std::string_view what) {
  for (auto v : values)
    if (to_string(v) == s) return v;
  throw Error(Errc::schema_violation, "unknown " + std::string(what) + ": " + std::string(s));
}

CriterionStatus parse_status(std::string_view s) {
  return parse_enum(s,
                    std::array{CriterionStatus::draft, CriterionStatus::approved, CriterionStatus::revised,
                               CriterionStatus::deleted},
                    "criterion status");
}

CriterionOrigin parse_origin(std::string_view s) {
  return parse_enum(s, std::array{CriterionOrigin::llm_generated, CriterionOrigin::human_added}, "criterion origin");
}

SampleState parse_state(std::string_view s) {
  return parse_enum(s,
                    std::array{SampleState::pending, SampleState::llm_drafted, SampleState::human_finalized,
                               SampleState::failed},
                    "sample state");
}

}  // namespace

ScaleKind parse_scale_kind(std::string_view s) {
  return parse_enum(s, std::array{ScaleKind::likert5, ScaleKind::level3, ScaleKind::categorical3}, "scale kind");
}

EvalMode parse_eval_mode(std::string_view s) {
  if (s == "step") return EvalMode::step_by_step;
  if (s == "step_human") return EvalMode::step_by_step_human;
  return parse_enum(s, std::array{EvalMode::direct, EvalMode::step_by_step, EvalMode::step_by_step_human},
                    "evaluation mode");
}

json number_or_nan(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return "NaN";
  return *v;
}

void to_json(json& j, const ScoreScale& v) {
  j = json{{"kind", to_string(v.kind)}, {"min", v.min}, {"max", v.max}};
  if (!v.labels.empty()) j["labels"] = v.labels;
}

void from_json(const json& j, ScoreScale& v) {
  v.kind = parse_scale_kind(j.at("kind").get<std::string>());
  switch (v.kind) {
    case ScaleKind::likert5: v = ScoreScale::likert5(); break;
    case ScaleKind::level3: v = ScoreScale::level3(); break;
    case ScaleKind::categorical3:
      v = ScoreScale::categorical3(j.value("labels", std::vector<std::string>{}));
      break;
  }
  if (j.contains("min")) v.min = j.at("min").get<int>();
  if (j.contains("max")) v.max = j.at("max").get<int>();
  v.validate();
}

void to_json(json& j, const SampleSource& v) {
  if (v.kind == SampleSource::Kind::model)
    j = json{{"kind", "model"}, {"tag", v.tag}};
  else
    j = json{{"kind", "human_reference"}};
}

void from_json(const json& j, SampleSource& v) {
  if (j.is_string()) {
    // shorthand used by task files: "human_reference" or a model tag
    const auto s = j.get<std::string>();
    v = s == "human_reference" || s == "human" ? SampleSource::human_reference() : SampleSource::model(s);
    return;
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "model")
    v = SampleSource::model(j.at("tag").get<std::string>());
  else if (kind == "human_reference")
    v = SampleSource::human_reference();
  else
    throw Error(Errc::schema_violation, "unknown sample source: " + kind);
}

void to_json(json& j, const Sample& v) {
  j = json{{"id", v.id}, {"input", v.input}, {"output", v.output}, {"source", v.source}};
}

void from_json(const json& j, Sample& v) {
  v.id = j.at("id").get<std::string>();
  v.input = j.at("input").get<std::string>();
  v.output = j.at("output").get<std::string>();
  v.source = j.value("source", json("human_reference")).get<SampleSource>();
}

void to_json(json& j, const Task& v) {
  j = json{{"id", v.id},
           {"description", v.description},
           {"demo_input", v.demo_input},
           {"demo_output", v.demo_output},
           {"samples", v.samples}};
}

void from_json(const json& j, Task& v) {
  v.id = j.at("id").get<std::string>();
  v.description = j.at("description").get<std::string>();
  v.demo_input = j.value("demo_input", "");
  v.demo_output = j.value("demo_output", "");
  v.samples = j.value("samples", std::vector<Sample>{});
}

void to_json(json& j, const Criterion& v) {
  j = json{{"id", v.id},         {"name", v.name},
           {"statement", v.statement}, {"scale", v.scale},
           {"origin", to_string(v.origin)}, {"status", to_string(v.status)}};
}

void from_json(const json& j, Criterion& v) {
  v.id = j.at("id").get<std::string>();
  v.name = j.at("name").get<std::string>();
  v.statement = j.at("statement").get<std::string>();
  v.scale = j.at("scale").get<ScoreScale>();
  v.origin = parse_origin(j.at("origin").get<std::string>());
  v.status = parse_status(j.at("status").get<std::string>());
}

void to_json(json& j, const Provenance& v) {
  j = json{{"kind", to_string(v.kind)}};
  if (v.kind == Provenance::Kind::sampled_draft) j["index"] = v.index;
}

void from_json(const json& j, Provenance& v) {
  v.kind = parse_enum(j.at("kind").get<std::string>(),
                      std::array{Provenance::Kind::deterministic_draft, Provenance::Kind::sampled_draft,
                                 Provenance::Kind::finalized},
                      "provenance");
  v.index = j.value("index", 0);
}

namespace {

json target_to_json(const ActionTarget& t) {
  struct Visitor {
    json operator()(const std::monostate&) const { return nullptr; }
    json operator()(const CriterionRef& r) const { return {{"type", "criterion"}, {"criterion_id", r.criterion_id}}; }
    json operator()(const CellRef& r) const {
      return {{"type", "cell"}, {"sample_id", r.sample_id}, {"criterion_id", r.criterion_id}};
    }
    json operator()(const OverallRef& r) const { return {{"type", "overall"}, {"sample_id", r.sample_id}}; }
  };
  return std::visit(Visitor{}, t);
}

ActionTarget target_from_json(const json& j) {
  if (j.is_null()) return std::monostate{};
  const auto type = j.at("type").get<std::string>();
  if (type == "criterion") return CriterionRef{j.at("criterion_id").get<std::string>()};
  if (type == "cell") return CellRef{j.at("sample_id").get<std::string>(), j.at("criterion_id").get<std::string>()};
  if (type == "overall") return OverallRef{j.at("sample_id").get<std::string>()};
  throw Error(Errc::schema_violation, "unknown action target type: " + type);
}

}  // namespace

void to_json(json& j, const HumanAction& v) {
  j = json{{"actor", v.actor},
           {"target", target_to_json(v.target)},
           {"kind", action_name(v.kind)},
           {"timestamp", format_rfc3339(v.timestamp)}};
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, action::NeedToImprove>) {
          j["new_statement"] = k.new_statement;
        } else if constexpr (std::is_same_v<K, action::Add>) {
          j["criterion"] = json{{"name", k.name}, {"statement", k.statement}, {"scale", k.scale}};
        } else if constexpr (std::is_same_v<K, action::EditScore>) {
          j["new_score"] = k.new_score;
        } else if constexpr (std::is_same_v<K, action::EditExplanation>) {
          j["new_text"] = k.new_text;
        }
      },
      v.kind);
}

void from_json(const json& j, HumanAction& v) {
  v.actor = j.at("actor").get<std::string>();
  v.target = target_from_json(j.value("target", json(nullptr)));
  v.timestamp = j.contains("timestamp") ? parse_rfc3339(j.at("timestamp").get<std::string>()) : Timestamp{};
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "approve") {
    v.kind = action::Approve{};
  } else if (kind == "need_to_improve") {
    v.kind = action::NeedToImprove{j.at("new_statement").get<std::string>()};
  } else if (kind == "delete") {
    v.kind = action::Delete{};
  } else if (kind == "add") {
    const auto& c = j.at("criterion");
    v.kind = action::Add{c.at("name").get<std::string>(), c.at("statement").get<std::string>(),
                         c.contains("scale") ? c.at("scale").get<ScoreScale>() : ScoreScale::likert5()};
  } else if (kind == "edit_score") {
    v.kind = action::EditScore{j.at("new_score").get<int>()};
  } else if (kind == "edit_explanation") {
    v.kind = action::EditExplanation{j.at("new_text").get<std::string>()};
  } else {
    throw Error(Errc::schema_violation, "unknown action kind: " + kind);
  }
}

void to_json(json& j, const CriteriaSet& v) {
  j = json{{"id", v.id},
           {"task_id", v.task_id},
           {"criteria", v.criteria},
           {"provenance", v.provenance},
           {"temperature", v.temperature},
           {"initial", v.initial},
           {"drafted_as", v.drafted_as},
           {"audit", v.audit}};
}

void from_json(const json& j, CriteriaSet& v) {
  v.id = j.at("id").get<std::string>();
  v.task_id = j.at("task_id").get<std::string>();
  v.criteria = j.at("criteria").get<std::vector<Criterion>>();
  v.provenance = j.at("provenance").get<Provenance>();
  v.temperature = j.value("temperature", 0.0);
  v.initial = j.value("initial", v.criteria);
  v.drafted_as = j.contains("drafted_as") ? j.at("drafted_as").get<Provenance>() : v.provenance;
  v.audit = j.value("audit", std::vector<HumanAction>{});
}

void to_json(json& j, const Author& v) {
  if (v.kind == Author::Kind::llm)
    j = json{{"kind", "llm"}};
  else
    j = json{{"kind", "annotator"}, {"id", v.annotator_id}};
}

void from_json(const json& j, Author& v) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "llm")
    v = Author::llm();
  else if (kind == "annotator")
    v = Author::annotator(j.at("id").get<std::string>());
  else
    throw Error(Errc::schema_violation, "unknown author kind: " + kind);
}

void to_json(json& j, const CriterionEvaluation& v) {
  j = json{{"criterion_id", v.criterion_id}, {"explanation", v.explanation}, {"score", v.score}, {"author", v.author}};
  if (v.raw_llm_text) j["raw_llm_text"] = *v.raw_llm_text;
}

void from_json(const json& j, CriterionEvaluation& v) {
  v.criterion_id = j.at("criterion_id").get<std::string>();
  v.explanation = j.value("explanation", "");
  v.score = j.at("score").get<int>();
  v.author = j.value("author", json{{"kind", "llm"}}).get<Author>();
  v.raw_llm_text = j.contains("raw_llm_text") ? std::optional(j.at("raw_llm_text").get<std::string>()) : std::nullopt;
}

void to_json(json& j, const EvalVersion& v) {
  if (v.kind == EvalVersion::Kind::llm_draft)
    j = json{{"kind", "llm_draft"}};
  else
    j = json{{"kind", "human_final"}, {"annotator_id", v.annotator_id}};
}

void from_json(const json& j, EvalVersion& v) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "llm_draft")
    v = EvalVersion::llm_draft();
  else if (kind == "human_final")
    v = EvalVersion::human_final(j.at("annotator_id").get<std::string>());
  else
    throw Error(Errc::schema_violation, "unknown evaluation version: " + kind);
}

void to_json(json& j, const SampleEvaluation& v) {
  j = json{{"id", v.id},
           {"run_id", v.run_id},
           {"sample_id", v.sample_id},
           {"criterion_evals", v.criterion_evals},
           {"missing_criteria", v.missing_criteria},
           {"overall_score", v.overall_score},
           {"overall_explanation", v.overall_explanation},
           {"mode", to_string(v.mode)},
           {"version", v.version},
           {"edits", v.edits}};
  if (v.overall_raw) j["overall_raw"] = *v.overall_raw;
}

void from_json(const json& j, SampleEvaluation& v) {
  v.id = j.at("id").get<std::string>();
  v.run_id = j.value("run_id", "");
  v.sample_id = j.at("sample_id").get<std::string>();
  v.criterion_evals = j.value("criterion_evals", std::vector<CriterionEvaluation>{});
  v.missing_criteria = j.value("missing_criteria", std::vector<std::string>{});
  v.overall_score = j.at("overall_score").get<int>();
  v.overall_explanation = j.value("overall_explanation", "");
  v.overall_raw = j.contains("overall_raw") ? std::optional(j.at("overall_raw").get<std::string>()) : std::nullopt;
  v.mode = parse_eval_mode(j.at("mode").get<std::string>());
  v.version = j.at("version").get<EvalVersion>();
  v.edits = j.value("edits", std::vector<HumanAction>{});
}

void to_json(json& j, const SampleStatus& v) {
  j = json{{"state", to_string(v.state)}};
  if (!v.reason.empty()) j["reason"] = v.reason;
}

void from_json(const json& j, SampleStatus& v) {
  v.state = parse_state(j.at("state").get<std::string>());
  v.reason = j.value("reason", "");
}

void to_json(json& j, const EvaluationRun& v) {
  j = json{{"id", v.id},
           {"task_id", v.task_id},
           {"criteria_set_id", v.criteria_set_id ? json(*v.criteria_set_id) : json(nullptr)},
           {"mode", to_string(v.mode)},
           {"sample_ids", v.sample_ids},
           {"statuses", v.statuses}};
}

void from_json(const json& j, EvaluationRun& v) {
  v.id = j.at("id").get<std::string>();
  v.task_id = j.at("task_id").get<std::string>();
  const auto& set = j.value("criteria_set_id", json(nullptr));
  v.criteria_set_id = set.is_null() ? std::nullopt : std::optional(set.get<std::string>());
  v.mode = parse_eval_mode(j.at("mode").get<std::string>());
  v.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
  v.statuses = j.value("statuses", std::vector<SampleStatus>(v.sample_ids.size()));
}

}  // namespace coeval
