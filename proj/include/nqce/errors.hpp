#pragma once

#include <stdexcept>
#include <string>

namespace nqce {

// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  Argument,
  Capacity,
  Validation,
  Positivity,
  Overlap,
  Solver,
  Variance,
  Fit,
  Degenerate,
  Config,
  Io,
};

const char* to_string(ErrorKind kind);

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

}  // namespace nqce
