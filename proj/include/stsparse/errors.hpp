#ifndef STSPARSE_ERRORS_HPP
#define STSPARSE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stsparse {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of operands do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class InconsistentFlipError : public Error {
 public:
  using Error::Error;
};

/// A node mask selected no nodes where at least one is required.
class DegenerateMaskError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFeaturesError : public Error {
 public:
  using Error::Error;
};

class InfeasibleBudgetError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IncompleteGroupError : public Error {
 public:
  using Error::Error;
};

/// Bad or inconsistent user configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset contents disagree with their manifest (CLI exit code 3).
class IntegrityError : public Error {
 public:
  IntegrityError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed input line (CLI exit code 3).
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Training produced a non-finite loss.
class TrainingFailure : public Error {
 public:
  explicit TrainingFailure(int epoch)
      : Error("training diverged (non-finite loss) at epoch " +
              std::to_string(epoch)),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace stsparse

#endif  // STSPARSE_ERRORS_HPP
