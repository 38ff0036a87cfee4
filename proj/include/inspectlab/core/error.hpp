#pragma once

#include <stdexcept>
#include <string>

namespace inspectlab {

enum class ErrorKind {
  invalid_argument,
  config,
  io,
  format,
  version_mismatch,
  missing_sample,
  numerical,
  label_guard,
  refusal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::invalid_argument, what);
}

}  // namespace inspectlab
