#pragma once

#include <stdexcept>
#include <string>

namespace pkde {

// Error taxonomy used across the toolkit. The CLI maps kinds to exit codes
// (usage -> 1, invalid_argument/data/io -> 2, numerical -> 3).
enum class ErrorKind {
  invalid_argument,  // caller violated a precondition or type invariant
  data,              // malformed or inconsistent input data / files
  numerical,         // NaN, divergence, singular systems
  io,                // filesystem failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_invalid(const std::string& msg) {
  throw Error(ErrorKind::invalid_argument, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
[[noreturn]] inline void throw_numerical(const std::string& msg) {
  throw Error(ErrorKind::numerical, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorKind::io, msg); }

}  // namespace pkde
