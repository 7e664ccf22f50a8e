#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reprstruct {

enum class ErrorCode {
  invalid_parameter,
  invalid_data,
  shape_error,
  inconsistent_histogram,
  missing_labels,
  missing_label,
  empty_labelset,
  undefined_measure,
  alignment_error,
  format_error,
  io_error,
  undefined_correlation,
  insufficient_runs,
};

constexpr std::string_view error_slug(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_parameter: return "invalid-parameter";
    case ErrorCode::invalid_data: return "invalid-data";
    case ErrorCode::shape_error: return "shape-error";
    case ErrorCode::inconsistent_histogram: return "inconsistent-histogram";
    case ErrorCode::missing_labels: return "missing-labels";
    case ErrorCode::missing_label: return "missing-label";
    case ErrorCode::empty_labelset: return "empty-labelset";
    case ErrorCode::undefined_measure: return "undefined-measure";
    case ErrorCode::alignment_error: return "alignment-error";
    case ErrorCode::format_error: return "format-error";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::undefined_correlation: return "undefined-correlation";
    case ErrorCode::insufficient_runs: return "insufficient-runs";
  }
  return "unknown";
}

/// Every failure in the library surfaces as this exception; `code()` is the
/// machine-readable category used by the CLI for exit codes and prefixes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view slug() const noexcept { return error_slug(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace reprstruct
