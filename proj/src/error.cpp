#include "kgmode/error.hpp"

namespace kgmode {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NoBoundState: return "NoBoundState";
    case ErrorKind::MultipleBoundStates: return "MultipleBoundStates";
    case ErrorKind::ModeOutOfBand: return "ModeOutOfBand";
    case ErrorKind::TargetUnreachable: return "TargetUnreachable";
    case ErrorKind::NormalizationFailure: return "NormalizationFailure";
    case ErrorKind::OutOfBand: return "OutOfBand";
    case ErrorKind::NonPositiveGamma: return "NonPositiveGamma";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::CheckpointCorrupt: return "CheckpointCorrupt";
    case ErrorKind::InsufficientTrace: return "InsufficientTrace";
    case ErrorKind::InsufficientSnapshots: return "InsufficientSnapshots";
    case ErrorKind::FitDegenerate: return "FitDegenerate";
    case ErrorKind::MemoryBudget: return "MemoryBudget";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::PoleOnBoundary: return "PoleOnBoundary";
    case ErrorKind::MissingDependency: return "MissingDependency";
    case ErrorKind::HashMismatch: return "HashMismatch";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace kgmode
