#pragma once

#include <stdexcept>
#include <string>

namespace ctspline {

enum class ErrorKind {
  DimensionMismatch,
  NonFinite,
  NotControllable,
  NotObservable,
  InvalidArgument,
  NonIncreasingTimes,
  NonPositiveTime,
  QuadratureNonConvergence,
  SingularSystem,
  StepSizeFailure,
  MaxIterationsExceeded,
  ParseError,
  DuplicateTime,
  NonPositiveWeight,
  OutOfRange,
  IoError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotControllable: return "NotControllable";
    case ErrorKind::NotObservable: return "NotObservable";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonIncreasingTimes: return "NonIncreasingTimes";
    case ErrorKind::NonPositiveTime: return "NonPositiveTime";
    case ErrorKind::QuadratureNonConvergence: return "QuadratureNonConvergence";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::StepSizeFailure: return "StepSizeFailure";
    case ErrorKind::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateTime: return "DuplicateTime";
    case ErrorKind::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

// Every failure in the library is reported through this exception; kind()
// lets callers branch without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ctspline
