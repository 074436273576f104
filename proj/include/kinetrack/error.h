#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kinetrack {

enum class ErrorKind {
  DegenerateCalibration,
  DimensionMismatch,
  FlatPatch,
  InsufficientOverlap,
  NotComparable,
  InvalidScenario,
  MissingInput,
  UnreadableFrame,
  ConfigError,
  SchemaMismatch,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a category so the CLI can
// print a categorized error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace kinetrack
