#pragma once

#include <stdexcept>
#include <string>

namespace dsgc {

/// Input lies outside the mathematical domain of a primitive (arcosh below 1,
/// artanh at or beyond +-1, zero divisor, non-finite value, point outside the ball).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Operand shapes cannot be composed.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A required file could not be opened.
class LoadError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed content in a dataset or configuration file.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

private:
  std::string file_;
  std::size_t line_;
};

/// Configuration record carries an unknown or ill-typed key.
class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(key) {}

  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(int fold, int epoch)
      : std::runtime_error("non-finite loss in fold " + std::to_string(fold) + " at epoch " +
                           std::to_string(epoch)),
        fold_(fold),
        epoch_(epoch) {}

  int fold() const noexcept { return fold_; }
  int epoch() const noexcept { return epoch_; }

private:
  int fold_;
  int epoch_;
};

}  // namespace dsgc
