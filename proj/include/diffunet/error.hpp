#pragma once

#include <stdexcept>
#include <string>

namespace diffunet {

/// Error categories double as CLI exit codes.
enum class ErrorCategory : int {
  kInternal = 1,
  kConfig = 2,
  kIo = 3,
  kFormat = 4,
  kShape = 5,
  kRange = 6,
  kNumeric = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorCategory::kFormat, what) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::kShape, what) {}
};
struct OutOfRangeError : Error {
  explicit OutOfRangeError(const std::string& what) : Error(ErrorCategory::kRange, what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorCategory::kNumeric, what) {}
};

/// Rethrows `e` as the same concrete type with `context` prepended.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  const std::string what = context + e.what();
  switch (e.category()) {
    case ErrorCategory::kConfig: throw ConfigError(what);
    case ErrorCategory::kIo: throw IoError(what);
    case ErrorCategory::kFormat: throw FormatError(what);
    case ErrorCategory::kShape: throw ShapeError(what);
    case ErrorCategory::kRange: throw OutOfRangeError(what);
    case ErrorCategory::kNumeric: throw NumericError(what);
    default: throw Error(e.category(), what);
  }
}

}  // namespace diffunet
