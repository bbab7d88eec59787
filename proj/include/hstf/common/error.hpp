#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hstf {

/// Categories of fatal errors. Each maps to a stable machine-parsable code.
enum class ErrorCode {
  kUsage,
  kIo,
  kCapture,
  kLabels,
  kConfig,
  kShape,
  kData,
  kNumeric,
  kCheckpoint,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hstf
