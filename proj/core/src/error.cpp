#include "voxl/error.hpp"

namespace voxl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "missing file";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kLengthMismatch: return "length mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kInvariantViolation: return "invariant violation";
    case ErrorCode::kUnwritable: return "unwritable destination";
    case ErrorCode::kOutOfBounds: return "out of bounds";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kCorruptCheckpoint: return "corrupt checkpoint";
    case ErrorCode::kNonFiniteLoss: return "non-finite loss";
    case ErrorCode::kConfig: return "config error";
  }
  return "unknown";
}

}  // namespace voxl
