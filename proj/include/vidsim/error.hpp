#pragma once

#include <stdexcept>
#include <string>

namespace vidsim {

enum class ErrorKind {
  InvalidArgument,
  DegenerateSites,
  SelfIntersecting,
  ParseError,
  NonMonotonicFrames,
  TooShort,
  BadWindow,
  TooFewSamples,
  ShapeMismatch,
  EmptyBatch,
  EmptyDataset,
  MissingSeedData,
  ModelShapeMismatch,
  NoInwardDirection,
  StepCapExceeded,
  EmptySet,
  UnmatchedId,
  Config,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateSites: return "DegenerateSites";
    case ErrorKind::SelfIntersecting: return "SelfIntersecting";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NonMonotonicFrames: return "NonMonotonicFrames";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::BadWindow: return "BadWindow";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::MissingSeedData: return "MissingSeedData";
    case ErrorKind::ModelShapeMismatch: return "ModelShapeMismatch";
    case ErrorKind::NoInwardDirection: return "NoInwardDirection";
    case ErrorKind::StepCapExceeded: return "StepCapExceeded";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::UnmatchedId: return "UnmatchedId";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// ParseError carrying the 1-based line number of the offending row.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace vidsim
