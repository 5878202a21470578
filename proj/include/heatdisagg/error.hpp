#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace heatdisagg {

enum class ErrorCode {
  EmptyFile,
  FormatError,
  NoStations,
  NoOverlap,
  DegenerateSample,
  BadSimplex,
  NonFinite,
  TooFewObservations,
  Diverged,
  ScalingMismatch,
  InsufficientColdDays,
  TooSmallSample,
  AllNonPositive,
  EmptySide,
  AllExcluded,
  AllFailed,
  MissingFit,
  InvalidArgument,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::NoStations: return "NoStations";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::BadSimplex: return "BadSimplex";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::ScalingMismatch: return "ScalingMismatch";
    case ErrorCode::InsufficientColdDays: return "InsufficientColdDays";
    case ErrorCode::TooSmallSample: return "TooSmallSample";
    case ErrorCode::AllNonPositive: return "AllNonPositive";
    case ErrorCode::EmptySide: return "EmptySide";
    case ErrorCode::AllExcluded: return "AllExcluded";
    case ErrorCode::AllFailed: return "AllFailed";
    case ErrorCode::MissingFit: return "MissingFit";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace heatdisagg
