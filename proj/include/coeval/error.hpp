#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace coeval {

/// Every failure the library reports carries one of these codes. The string
/// form (`to_string`) is what appears in API error envelopes and CLI output.
enum class Errc {
  invalid_argument,
  not_found,
  conflict,
  unauthorized,
  forbidden,
  // domain
  unknown_target,
  set_already_finalized,
  empty_replacement_statement,
  draft_criteria_remain,
  invalid_action,
  // prompts
  missing_demonstration,
  unapproved_criterion,
  empty_history,
  template_error,
  // gateway
  transport,
  rate_limited,
  provider_rejected,
  truncated,
  dimension_mismatch,
  zero_norm_vector,
  // criteria engine
  parse_failure,
  no_list_detected,
  empty_set,
  need_at_least_two_sets,
  audit_replay_mismatch,
  // score extraction
  no_score_found,
  out_of_range,
  // evaluation
  unknown_cell,
  score_out_of_scale,
  already_run,
  // statistics
  length_mismatch,
  too_few_points,
  no_pairable_values,
  no_pairs,
  // storage
  storage_full,
  schema_violation,
  corrupt_record,
  log_locked,
  io_error,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  Errc code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  Errc code_;
  nlohmann::json details_;
};

/// True for errors that originate at the model provider (CLI exit code 3).
bool is_provider_error(Errc code) noexcept;

}  // namespace coeval
