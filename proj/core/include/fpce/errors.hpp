#pragma once

#include <stdexcept>
#include <string>

namespace fpce {

// Invalid or inconsistent configuration / input contract violations.
// The CLI maps this (and std::invalid_argument) to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A numerical procedure failed to converge or produced a non-finite result
// (rank-deficient solve, diverged training, infeasible equilibrium, ...).
// CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// A batch finished with some members failed; partial results were kept.
// CLI exit code 4.
class PartialBatchError : public std::runtime_error {
 public:
  PartialBatchError(const std::string& what, int failed, int total)
      : std::runtime_error(what), failed_count(failed), total_count(total) {}
  int failed_count;
  int total_count;
};

}  // namespace fpce
