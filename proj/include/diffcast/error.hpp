#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace diffcast {

/// Broad failure category. The CLI maps each one to a distinct exit status
/// and prints it as the first token of the error line.
enum class ErrorKind {
  Shape,
  Config,
  Data,
  Io,
  Numeric,
  Checkpoint,
  Usage,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Io: return "io";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Checkpoint: return "checkpoint";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace diffcast
