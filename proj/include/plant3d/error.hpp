#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace plant3d {

enum class ErrorKind {
  NotFound,
  ParseError,
  EmptyCloud,
  TooFewPoints,
  InvalidK,
  InvalidRadius,
  NoNormals,
  BadScaleLadder,
  TooFewNeighbors,
  UndefinedNormal,
  ZeroVector,
  DegenerateNeighborhood,
  TooFewSamples,
  DimensionMismatch,
  EmptySet,
  SingleClass,
  LengthMismatch,
  Empty,
  UnknownCondition,
  TooFewDays,
  ClassTooSmall,
  InvalidSpec,
  InvalidArgument,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::InvalidRadius: return "InvalidRadius";
    case ErrorKind::NoNormals: return "NoNormals";
    case ErrorKind::BadScaleLadder: return "BadScaleLadder";
    case ErrorKind::TooFewNeighbors: return "TooFewNeighbors";
    case ErrorKind::UndefinedNormal: return "UndefinedNormal";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DegenerateNeighborhood: return "DegenerateNeighborhood";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::Empty: return "Empty";
    case ErrorKind::UnknownCondition: return "UnknownCondition";
    case ErrorKind::TooFewDays: return "TooFewDays";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

/// Same kind, message prefixed with `context`.
inline Error with_context(const Error& e, const std::string& context) { return Error(e.kind(), context + ": " + e.detail()); }

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace plant3d
