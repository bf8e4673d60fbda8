#pragma once

#include <stdexcept>
#include <string>

namespace rgc {

enum class ErrorKind {
  kDimension,   // tensor shapes or counts do not conform
  kConfig,      // invalid configuration value or unknown name
  kTopology,    // states of different kind/topology compared
  kEmptyInput,  // operation requires a nonempty input
  kIo,          // file missing, unreadable or malformed
  kInvariant,   // a runtime invariant was found violated
};

const char* to_string(ErrorKind kind) noexcept;

/// Structured error thrown by every module. `kind()` lets callers (notably the
/// CLI) map failures to exit codes without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace rgc
