#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace jscc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization met a non-positive pivot.
class DefinitenessError : public Error {
 public:
  DefinitenessError(std::size_t pivot, double value)
      : Error("matrix is not positive definite: pivot " + std::to_string(pivot) +
              " = " + std::to_string(value)),
        pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  LengthError(const std::string& what, std::size_t expected, std::size_t actual)
      : Error(what + ": expected " + std::to_string(expected) + " bytes, got " +
              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class DeepFadeError : public Error {
 public:
  using Error::Error;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class BaselineError : public Error {
 public:
  using Error::Error;
};

class DependencyError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss; parameters were rolled back to the
/// last finite step before this was thrown.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Configuration validation failure; lists every offending key.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "invalid configuration:";
    for (const auto& item : items) out += "\n  " + item;
    return out;
  }
  std::vector<std::string> problems_;
};

}  // namespace jscc
