#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace batchorder {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or dimensions that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required, or a numeric routine that cannot proceed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A gradient or parameter vector belonging to a different model layout.
class LayoutError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content (bad magic, unsupported type).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File content shorter than its header promises.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// BatchPlan invariant violation.
class PlanError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration. Carries every offending key.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> keys)
      : Error(format(keys)), keys_(std::move(keys)) {}

  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  static std::string format(const std::vector<std::string>& keys) {
    std::string msg = "invalid configuration:";
    for (const auto& k : keys) msg += "\n  " + k;
    return msg;
  }

  std::vector<std::string> keys_;
};

}  // namespace batchorder
