#pragma once

#include <stdexcept>
#include <string>

namespace mtp {

// Malformed or missing input (files, columns, configuration). CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Data violates a structural invariant (e.g. a repealed law).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Identification check failed under strict mode. CLI exit code 3.
class IdentificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A nuisance fit failed inside a cross-fitting fold.
class FoldFitError : public std::runtime_error {
 public:
  FoldFitError(int fold, int step, const std::string& what)
      : std::runtime_error("fold " + std::to_string(fold) + ", step " + std::to_string(step) +
                           ": " + what),
        fold_(fold),
        step_(step) {}
  int fold() const noexcept { return fold_; }
  int step() const noexcept { return step_; }

 private:
  int fold_;
  int step_;
};

}  // namespace mtp
