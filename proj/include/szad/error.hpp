#pragma once

#include <stdexcept>
#include <string>

namespace szad {

enum class ErrorKind {
  kConfig,
  kUsage,
  kParse,
  kShape,
  kSize,
  kBand,
  kLabel,
  kData,
  kSplit,
  kScheme,
  kLookup,
  kNumeric,
  kCorruptModel,
  kIo,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace szad
