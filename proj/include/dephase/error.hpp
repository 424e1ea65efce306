#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dephase {

enum class ErrorKind {
  Domain,
  NoSolution,
  NonUnimodal,
  QuadratureFailed,
  NoPeak,
  NotConverged,
  IllConditioned,
  InsufficientData,
  InsufficientDecay,
  Config,
  Parse,
  NonMonotonicGrid,
  EmptyFile,
  Io,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Domain: return "Domain";
    case ErrorKind::NoSolution: return "NoSolution";
    case ErrorKind::NonUnimodal: return "NonUnimodal";
    case ErrorKind::QuadratureFailed: return "QuadratureFailed";
    case ErrorKind::NoPeak: return "NoPeak";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::InsufficientDecay: return "InsufficientDecay";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::NonMonotonicGrid: return "NonMonotonicGrid";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace dephase
