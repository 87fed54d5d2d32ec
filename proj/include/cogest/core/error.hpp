#ifndef COGEST_CORE_ERROR_HPP_
#define COGEST_CORE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cogest {

// Values double as process exit codes.
enum class ErrorKind : int {
  usage = 1,
  dependency = 2,
  data = 3,
  numerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

/// Bad arguments, configuration or specs.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// A required checkpoint or earlier training phase is missing or mismatched.
class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& what) : Error(ErrorKind::dependency, what) {}
};

/// Malformed or unusable input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& what) : DataError("shape error: " + what) {}
};

class ParseError : public DataError {
 public:
  ParseError(int line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// Training finished but the result fails its quality gate.
class TrainingFailure : public NumericalError {
 public:
  explicit TrainingFailure(const std::string& what) : NumericalError("training failure: " + what) {}
};

}  // namespace cogest

#endif  // COGEST_CORE_ERROR_HPP_
