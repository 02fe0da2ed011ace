#include "rram/error.hpp"

namespace rram {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::NonPositiveCurrent: return "NonPositiveCurrent";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::TargetOutOfRange: return "TargetOutOfRange";
    case ErrorKind::AllZeroConductance: return "AllZeroConductance";
    case ErrorKind::SingularNetwork: return "SingularNetwork";
    case ErrorKind::WrongBeamCount: return "WrongBeamCount";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::GeometryError: return "GeometryError";
    case ErrorKind::PoseOutsideTrack: return "PoseOutsideTrack";
    case ErrorKind::BackendFault: return "BackendFault";
  }
  return "Unknown";
}

}  // namespace rram
