#pragma once

#include <stdexcept>
#include <string>

namespace calibra {

// Error categories; the CLI maps them onto exit codes.
enum class ErrorKind {
  config,       // bad parameters or unsupported option combinations
  validation,   // data violates an invariant
  index,        // class index out of range
  parse,        // malformed input file
  numerical,    // non-finite values or optimizer failure
  unsupported,  // operation not defined for the given score or map
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::validation: return "validation";
    case ErrorKind::index: return "index";
    case ErrorKind::parse: return "parse";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::unsupported: return "unsupported";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

// Literal messages: no allocation on the success path.
inline void require(bool condition, ErrorKind kind, const char* what) {
  if (!condition) fail(kind, what);
}

}  // namespace calibra
