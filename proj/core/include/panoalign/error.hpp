#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace panoalign {

enum class ErrorCode {
  kValidation,
  kParse,
  kUnsupportedFormat,
  kCorruptHeader,
  kDimensionMismatch,
  kIoFailure,
  kDegenerateRay,
  kInvalidDepth,
  kNonFiniteGradient,
  kDiverged,
  kEmptyOverlap,
  kEmptyCloud,
};

std::string_view to_string(ErrorCode code);

/// Numeric failures (bad gradients, divergence) map to CLI exit code 2,
/// everything else is an input problem and maps to exit code 1.
bool is_numeric_failure(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }
  /// Message without the error-name prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace panoalign
