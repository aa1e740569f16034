#ifndef ADVRE_ERRORS_H_
#define ADVRE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace advre {

// Bad user-supplied configuration. Maps to exit code 1 in the CLI.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A record or object that violates a data invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Numerical failure during optimization (non-finite values, divergence,
// degenerate splits).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advre

#endif  // ADVRE_ERRORS_H_
