#pragma once

#include <stdexcept>
#include <string>

namespace menet {

enum class Errc {
  invalid_argument,
  shape_mismatch,
  invalid_range,
  numerical_failure,
  non_finite,
  insufficient_observations,
  empty_input,
  invalid_label,
  format_error,
  truncated,
  count_mismatch,
  corrupt_checkpoint,
  version_mismatch,
  io_error,
  config_error,
};

/// Coarse grouping used for process exit codes.
enum class ErrorCategory { usage = 1, data = 2, numerical = 3 };

constexpr ErrorCategory category_of(Errc code) {
  switch (code) {
    case Errc::numerical_failure:
    case Errc::non_finite:
    case Errc::insufficient_observations:
      return ErrorCategory::numerical;
    case Errc::format_error:
    case Errc::truncated:
    case Errc::count_mismatch:
    case Errc::corrupt_checkpoint:
    case Errc::version_mismatch:
    case Errc::io_error:
    case Errc::empty_input:
      return ErrorCategory::data;
    default:
      return ErrorCategory::usage;
  }
}

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  Errc code_;
};

}  // namespace menet
