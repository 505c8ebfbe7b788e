#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace taskgrasp
{

// Every failure mode the library can raise. The numeric values double as the
// CLI exit codes, so never renumber an existing entry.
enum class ErrorKind : int
{
  ConfigError = 2,
  ParseError = 3,
  InvalidPose = 4,
  DimensionMismatch = 5,
  BehindCamera = 6,
  OutOfBounds = 7,
  NoGraspExists = 8,
  NoFeasibleGrasp = 9,
  TooFewPoints = 10,
  SingleCluster = 11,
  TooManyCandidates = 12,
  UnparseableReply = 13,
  AmbiguousReply = 14,
  IndexOutOfRange = 15,
  PointOutOfImage = 16,
  Timeout = 17,
  TransportError = 18,
  AuthError = 19,
  ModelError = 20,
  VlmPointOffObject = 21,
  EmptyInput = 22,
  DetectorFailure = 23,
  UnknownRegion = 24,
  IoError = 25,
};

inline std::string_view to_string(ErrorKind kind)
{
  switch (kind)
  {
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvalidPose: return "InvalidPose";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::NoGraspExists: return "NoGraspExists";
    case ErrorKind::NoFeasibleGrasp: return "NoFeasibleGrasp";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::SingleCluster: return "SingleCluster";
    case ErrorKind::TooManyCandidates: return "TooManyCandidates";
    case ErrorKind::UnparseableReply: return "UnparseableReply";
    case ErrorKind::AmbiguousReply: return "AmbiguousReply";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::PointOutOfImage: return "PointOutOfImage";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::TransportError: return "TransportError";
    case ErrorKind::AuthError: return "AuthError";
    case ErrorKind::ModelError: return "ModelError";
    case ErrorKind::VlmPointOffObject: return "VlmPointOffObject";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DetectorFailure: return "DetectorFailure";
    case ErrorKind::UnknownRegion: return "UnknownRegion";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind)
  {
  }

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
  throw Error(kind, message);
}

}  // namespace taskgrasp
