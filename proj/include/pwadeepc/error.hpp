#pragma once

#include <stdexcept>
#include <string>

namespace pwadeepc {

enum class ErrorCode {
  NoRegion,
  DimensionMismatch,
  TooShort,
  InsufficientData,
  EmptyCluster,
  GridTooCoarse,
  Infeasible,
  MaxIter,
  RankDeficient,
  SingularWbar,
  InvalidArgument,
  MissingSolution,
  Io,
};

const char* to_string(ErrorCode code);

/// Single exception type for the library; `code()` distinguishes failure modes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoRegion: return "NoRegion";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::MaxIter: return "MaxIter";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularWbar: return "SingularWbar";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingSolution: return "MissingSolution";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace pwadeepc
