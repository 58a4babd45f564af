#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace microgrid {

// Argument outside the region where a model equation is defined.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// No schedule can satisfy balance and bounds at some step.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Time-series ingestion failure. Each validation rule has its own kind so
// callers (and tests) can tell them apart without string matching.
class ParseError : public std::runtime_error {
 public:
  enum class Kind {
    kIo,
    kEmpty,
    kMissingColumn,
    kExtraColumn,
    kMalformed,
    kNonMonotonic,
    kNonUniform,
    kNegative,
  };

  ParseError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace microgrid
