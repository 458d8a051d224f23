#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace otfit {

/// Precondition violated by the caller (dimension mismatch, empty set,
/// non-finite coordinate, bad config value).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A solver hit a numerical failure mid-run. `step` is the iteration at
/// which it was detected.
class SolverAbort : public std::runtime_error {
 public:
  SolverAbort(const std::string& what, std::int64_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

enum class FormatErrorKind { BadMagic, VersionMismatch, Truncated, Malformed, Io };

/// Binary file could not be read or written.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

/// Run-config parse failure; carries the offending line (1-based, 0 when
/// not tied to a line) and key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0, std::string key = {})
      : std::runtime_error(format(what, line, key)), line_(line), key_(std::move(key)) {}

  int line() const noexcept { return line_; }
  const std::string& key() const noexcept { return key_; }

 private:
  static std::string format(const std::string& what, int line, const std::string& key) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!key.empty()) out += "'" + key + "': ";
    return out + what;
  }

  int line_;
  std::string key_;
};

}  // namespace otfit
