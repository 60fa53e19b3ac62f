#pragma once

#include <stdexcept>
#include <string>

namespace nnn {

/// Diagnostic category carried by every library error. The CLI maps each
/// category to its own process exit code.
enum class ErrorCategory {
  config = 2,
  unknown_channel = 3,
  shape_mismatch = 4,
  missing_file = 5,
  format = 6,
  divergence = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::unknown_channel: return "unknown_channel";
    case ErrorCategory::shape_mismatch: return "shape_mismatch";
    case ErrorCategory::missing_file: return "missing_file";
    case ErrorCategory::format: return "format";
    case ErrorCategory::divergence: return "divergence";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorCategory c, const std::string& what) {
  throw Error(c, what);
}

}  // namespace nnn
