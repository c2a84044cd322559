#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kgmode {

enum class ErrorKind {
  InvalidConfig,
  NoBoundState,
  MultipleBoundStates,
  ModeOutOfBand,
  TargetUnreachable,
  NormalizationFailure,
  OutOfBand,
  NonPositiveGamma,
  NonFinite,
  CheckpointCorrupt,
  InsufficientTrace,
  InsufficientSnapshots,
  FitDegenerate,
  MemoryBudget,
  GridMismatch,
  PoleOnBoundary,
  MissingDependency,
  HashMismatch,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Every failure the library reports carries a machine-readable kind; the CLI
// maps kinds onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace kgmode
