#pragma once

#include <stdexcept>
#include <string>

namespace rram {

enum class ErrorKind {
  InvalidArgument,
  InsufficientData,
  NonPositiveCurrent,
  DegenerateFit,
  TargetOutOfRange,
  AllZeroConductance,
  SingularNetwork,
  WrongBeamCount,
  ParseError,
  GeometryError,
  PoseOutsideTrack,
  BackendFault,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rram
