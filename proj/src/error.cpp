#include "koopstab/error.hpp"

namespace koopstab {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::HistoryLengthMismatch: return "HistoryLengthMismatch";
    case ErrorKind::WrongKind: return "WrongKind";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::InvalidRegion: return "InvalidRegion";
    case ErrorKind::InfeasibleSynthesis: return "InfeasibleSynthesis";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::EmptyRun: return "EmptyRun";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace koopstab
