#include "panoalign/error.hpp"

namespace panoalign {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation: return "ValidationError";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kCorruptHeader: return "CorruptHeader";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kDegenerateRay: return "DegenerateRay";
    case ErrorCode::kInvalidDepth: return "InvalidDepth";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kEmptyOverlap: return "EmptyOverlap";
    case ErrorCode::kEmptyCloud: return "EmptyCloud";
  }
  return "Unknown";
}

bool is_numeric_failure(ErrorCode code) {
  return code == ErrorCode::kNonFiniteGradient || code == ErrorCode::kDiverged ||
         code == ErrorCode::kDegenerateRay;
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

}  // namespace panoalign
