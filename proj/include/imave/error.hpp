#pragma once

#include <stdexcept>
#include <string>

namespace imave {

// Machine-readable failure codes carried by every imave::Error. CLI maps these
// to "ERROR <code>: <message>" on stderr with exit status 2.
enum class ErrorCode {
  InvalidArgument,
  NonFiniteValue,
  UnknownTreatmentLevel,
  DegenerateTreatment,
  PropensityOutOfRange,
  NotBinary,
  SeparationDetected,
  InvalidLevel,
  InvalidDimension,
  NonPositiveBandwidth,
  RankDeficient,
  AllWeightsZero,
  EmptyNeighborhood,
  FoldDegenerate,
  ConstantInput,
  EmptyCell,
  IoError,
  ParseError,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::UnknownTreatmentLevel: return "UnknownTreatmentLevel";
    case ErrorCode::DegenerateTreatment: return "DegenerateTreatment";
    case ErrorCode::PropensityOutOfRange: return "PropensityOutOfRange";
    case ErrorCode::NotBinary: return "NotBinary";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::InvalidLevel: return "InvalidLevel";
    case ErrorCode::InvalidDimension: return "InvalidDimension";
    case ErrorCode::NonPositiveBandwidth: return "NonPositiveBandwidth";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::AllWeightsZero: return "AllWeightsZero";
    case ErrorCode::EmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::FoldDegenerate: return "FoldDegenerate";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace imave
