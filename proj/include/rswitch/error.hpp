#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rswitch {

enum class ErrorCode {
  Dimension,
  NonFinite,
  InvalidArgument,
  RowSum,
  NotIrreducible,
  BadDwellParameter,
  OutOfRange,
  HorizonExceeded,
  ZeroInitialState,
  Uncontrollable,
  SpectrumViolation,
  ModelShape,
  BadWindow,
  Parse,
  Io,
  Internal,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Dimension: return "DimensionError";
    case ErrorCode::NonFinite: return "NonFiniteError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::RowSum: return "RowSumError";
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::BadDwellParameter: return "BadDwellParameter";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::HorizonExceeded: return "HorizonExceeded";
    case ErrorCode::ZeroInitialState: return "ZeroInitialState";
    case ErrorCode::Uncontrollable: return "Uncontrollable";
    case ErrorCode::SpectrumViolation: return "SpectrumViolation";
    case ErrorCode::ModelShape: return "ModelShapeError";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Internal: return "InternalError";
  }
  return "UnknownError";
}

/// Every failure raised by the library carries one of the codes above; the
/// message is prefixed with the code name so diagnostics stay greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rswitch
