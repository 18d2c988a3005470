#pragma once

#include <stdexcept>
#include <string>

namespace ctd {

/// Failure category. Each maps to a process exit code in the CLI.
enum class ErrorKind {
  kUsage = 2,      // bad arguments, bad config, contract mismatch
  kData = 3,       // malformed or missing input data
  kNumerical = 4,  // NaN/Inf, divergence
};

/// Base error: carries a short machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& code() const { return code_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
  std::string code_;
};

inline Error UsageError(std::string code, const std::string& message) {
  return Error(ErrorKind::kUsage, std::move(code), message);
}
inline Error DataError(std::string code, const std::string& message) {
  return Error(ErrorKind::kData, std::move(code), message);
}
inline Error NumericalError(std::string code, const std::string& message) {
  return Error(ErrorKind::kNumerical, std::move(code), message);
}

}  // namespace ctd
