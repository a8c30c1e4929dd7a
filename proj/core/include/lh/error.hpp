#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lh {

/// Broad classification of failures. The service maps these onto HTTP
/// status codes; the CLI maps them onto exit codes.
enum class ErrorKind {
  invalid_argument,  // malformed request or precondition violated
  parse,             // textual input does not follow its format
  validation,        // parsed, but violates a structural invariant
  not_found,         // unknown id
  unsupported,       // recognised but deliberately not handled
  domain,            // well-formed input that the domain rejects (type conflict, ...)
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Error carrying a 1-based source location (line, column; 0 = unknown).
class LocatedError : public Error {
 public:
  LocatedError(ErrorKind kind, std::string message, int line, int column = 0);

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  /// Message without the "line:col:" prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  int line_;
  int column_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string message) {
  throw Error(kind, std::move(message));
}

}  // namespace lh
