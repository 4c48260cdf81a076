#include "bubbleview/error.hpp"

namespace bubbleview {

std::string_view reason_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "validation";
    case ErrorCode::empty_point_set: return "empty_point_set";
    case ErrorCode::zero_variance: return "zero_variance";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::out_of_bounds: return "out_of_bounds";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::conflict: return "seq_conflict";
    case ErrorCode::session_closed: return "session_closed";
    case ErrorCode::experiment_closed: return "experiment_closed";
    case ErrorCode::premature_advance: return "premature_advance";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

namespace {

std::string join_violations(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error(ErrorCode::validation, join_violations(violations)),
      violations_(std::move(violations)) {}

}  // namespace bubbleview
