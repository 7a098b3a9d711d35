#pragma once

#include <stdexcept>
#include <string>

namespace polyfit {

/// Category of a failure. The CLI maps these onto process exit codes.
enum class ErrorKind {
  InvalidDeformation,
  InvalidInvariant,
  InvalidParameter,
  Config,
  Domain,
  Numerical,
  Parse,
  Validation,
  ProtocolMismatch,
  UndefinedMetric,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidDeformation: return "invalid deformation";
    case ErrorKind::InvalidInvariant: return "invalid invariant";
    case ErrorKind::InvalidParameter: return "invalid parameter";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Numerical: return "numerical error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::ProtocolMismatch: return "protocol mismatch";
    case ErrorKind::UndefinedMetric: return "undefined metric";
    case ErrorKind::Io: return "I/O error";
  }
  return "error";
}

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

} // namespace polyfit
