#pragma once

#include <stdexcept>
#include <string>

namespace melody {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kBadArguments = 2,
  kDataError = 3,
  kNumericFailure = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what)
      : Error(ExitCode::kBadArguments, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ExitCode::kDataError, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ExitCode::kNumericFailure, what) {}
};

}  // namespace melody
