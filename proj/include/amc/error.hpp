#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace amc {

enum class ErrorCode {
  kBitCountMismatch,
  kInvalidSpec,
  kNonIntegerDelay,
  kLengthMismatch,
  kZeroNoise,
  kNonDistinctAlphas,
  kEncodingFailure,
  kIoError,
  kMalformedRecord,
  kInsufficientSamples,
  kShapeError,
  kDivergedLoss,
  kLabelOutOfRange,
  kEmptyMatrix,
  kInvalidScheme,
  kInvalidConfig,
};

std::string_view ErrorCodeName(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can dispatch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBitCountMismatch: return "BitCountMismatch";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kNonIntegerDelay: return "NonIntegerDelay";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kZeroNoise: return "ZeroNoise";
    case ErrorCode::kNonDistinctAlphas: return "NonDistinctAlphas";
    case ErrorCode::kEncodingFailure: return "EncodingFailure";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kEmptyMatrix: return "EmptyMatrix";
    case ErrorCode::kInvalidScheme: return "InvalidScheme";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace amc
