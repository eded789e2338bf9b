#pragma once

#include <stdexcept>
#include <string>

namespace qmri {

enum class ErrorKind {
  usage,    // bad arguments, bad config, unknown flag
  io,       // missing file, bad magic, truncated payload
  shape,    // inconsistent dimensions
  numeric,  // NaN, divergence, non-convergence that aborts
  domain,   // precondition on a value (empty mask, zero signal, ...)
};

// All library failures are reported as qmri::Error. The kind drives the CLI
// exit code; the message is a single line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::io: return "io";
    case ErrorKind::shape: return "shape";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::domain: return "domain";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace qmri
