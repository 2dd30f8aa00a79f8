#include "coeval/error.hpp"

namespace coeval {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::not_found: return "NotFound";
    case Errc::conflict: return "Conflict";
    case Errc::unauthorized: return "Unauthorized";
    case Errc::forbidden: return "Forbidden";
    case Errc::unknown_target: return "UnknownTarget";
    case Errc::set_already_finalized: return "SetAlreadyFinalized";
    case Errc::empty_replacement_statement: return "EmptyReplacementStatement";
    case Errc::draft_criteria_remain: return "DraftCriteriaRemain";
    case Errc::invalid_action: return "InvalidAction";
    case Errc::missing_demonstration: return "MissingDemonstration";
    case Errc::unapproved_criterion: return "UnapprovedCriterion";
    case Errc::empty_history: return "EmptyHistory";
    case Errc::template_error: return "TemplateError";
    case Errc::transport: return "Transport";
    case Errc::rate_limited: return "RateLimited";
    case Errc::provider_rejected: return "ProviderRejected";
    case Errc::truncated: return "Truncated";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::zero_norm_vector: return "ZeroNormVector";
    case Errc::parse_failure: return "ParseFailure";
    case Errc::no_list_detected: return "NoListDetected";
    case Errc::empty_set: return "EmptySet";
    case Errc::need_at_least_two_sets: return "NeedAtLeastTwoSets";
    case Errc::audit_replay_mismatch: return "AuditReplayMismatch";
    case Errc::no_score_found: return "NoScoreFound";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::unknown_cell: return "UnknownCell";
    case Errc::score_out_of_scale: return "ScoreOutOfScale";
    case Errc::already_run: return "AlreadyRun";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::too_few_points: return "TooFewPoints";
    case Errc::no_pairable_values: return "NoPairableValues";
    case Errc::no_pairs: return "NoPairs";
    case Errc::storage_full: return "StorageFull";
    case Errc::schema_violation: return "SchemaViolation";
    case Errc::corrupt_record: return "CorruptRecord";
    case Errc::log_locked: return "LogLocked";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

bool is_provider_error(Errc code) noexcept {
  switch (code) {
    case Errc::transport:
    case Errc::rate_limited:
    case Errc::provider_rejected:
    case Errc::truncated:
    case Errc::dimension_mismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace coeval
