#pragma once

// nlohmann::json mappings for the domain model. These are the wire and log
// representations; field names are stable.

#include <json.hpp>

#include "coeval/domain.hpp"

namespace coeval {

void to_json(nlohmann::json& j, const ScoreScale& v);
void from_json(const nlohmann::json& j, ScoreScale& v);
void to_json(nlohmann::json& j, const SampleSource& v);
void from_json(const nlohmann::json& j, SampleSource& v);
void to_json(nlohmann::json& j, const Sample& v);
void from_json(const nlohmann::json& j, Sample& v);
void to_json(nlohmann::json& j, const Task& v);
void from_json(const nlohmann::json& j, Task& v);
void to_json(nlohmann::json& j, const Criterion& v);
void from_json(const nlohmann::json& j, Criterion& v);
void to_json(nlohmann::json& j, const Provenance& v);
void from_json(const nlohmann::json& j, Provenance& v);
void to_json(nlohmann::json& j, const HumanAction& v);
void from_json(const nlohmann::json& j, HumanAction& v);
void to_json(nlohmann::json& j, const CriteriaSet& v);
void from_json(const nlohmann::json& j, CriteriaSet& v);
void to_json(nlohmann::json& j, const Author& v);
void from_json(const nlohmann::json& j, Author& v);
void to_json(nlohmann::json& j, const CriterionEvaluation& v);
void from_json(const nlohmann::json& j, CriterionEvaluation& v);
void to_json(nlohmann::json& j, const EvalVersion& v);
void from_json(const nlohmann::json& j, EvalVersion& v);
void to_json(nlohmann::json& j, const SampleEvaluation& v);
void from_json(const nlohmann::json& j, SampleEvaluation& v);
void to_json(nlohmann::json& j, const SampleStatus& v);
void from_json(const nlohmann::json& j, SampleStatus& v);
void to_json(nlohmann::json& j, const EvaluationRun& v);
void from_json(const nlohmann::json& j, EvaluationRun& v);

ScaleKind parse_scale_kind(std::string_view s);
EvalMode parse_eval_mode(std::string_view s);

/// Undefined statistics serialize as the string "NaN".
nlohmann::json number_or_nan(const std::optional<double>& v);

}  // namespace coeval
