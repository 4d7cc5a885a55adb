#pragma once

#include <stdexcept>
#include <string>

namespace sinkformer {

enum class ErrorKind {
  kInvalidInput,
  kDimensionMismatch,
  kNumeric,
  kConvergence,
  kSize,
  kRange,
  kStrictPositivity,
  kUnattainable,
  kDivergence,
};

const char* to_string(ErrorKind kind);

/// Base class for every failure raised by the library. `kind()` lets callers
/// (notably the CLI) map errors onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when Sinkhorn exhausts its iteration budget.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double final_violation, int iters)
      : Error(ErrorKind::kConvergence, what),
        final_violation_(final_violation),
        iters_(iters) {}

  double final_violation() const noexcept { return final_violation_; }
  int iters() const noexcept { return iters_; }

 private:
  double final_violation_;
  int iters_;
};

/// Malformed document or configuration; `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(ErrorKind::kInvalidInput, "field '" + field + "': " + what), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace sinkformer
