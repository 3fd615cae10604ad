#pragma once

#include <stdexcept>
#include <string>

namespace ivp {

enum class ErrorCode {
  kInvalidArgument,
  kValidation,
  kIo,
  kMissingFile,
  kMalformed,
  kDegenerate,
  kSingularity,
  kNotFound,
  kTimeout,
  kConnection,
  kDimensionMismatch,
  kRemote,
};

const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` distinguishes failure kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ivp
