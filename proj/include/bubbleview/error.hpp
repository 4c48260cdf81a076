#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bubbleview {

/// Machine-readable failure category. The service layer maps these onto
/// HTTP statuses and reports `reason_code()` in error bodies.
enum class ErrorCode {
  validation,
  empty_point_set,
  zero_variance,
  dimension_mismatch,
  out_of_bounds,
  not_found,
  unauthorized,
  conflict,
  session_closed,
  experiment_closed,
  premature_advance,
  io,
};

std::string_view reason_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Carries every violated invariant, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations);

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

}  // namespace bubbleview
