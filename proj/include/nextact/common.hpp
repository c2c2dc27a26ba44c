#pragma once

#include <stdexcept>
#include <string>

namespace nextact {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input, malformed data, or a violated call contract. CLI exit code 2.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Shape, rank, or dimension mismatch between tensors or configured sizes.
class ShapeError : public ValidationError {
 public:
  explicit ShapeError(const std::string& msg) : ValidationError(msg) {}
};

// Non-finite values or other numeric breakdown. CLI exit code 3.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Filesystem failures, always carrying the offending path.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Failure inside a pluggable pipeline stage (e.g. an external detector hook).
class PipelineError : public Error {
 public:
  explicit PipelineError(const std::string& msg) : Error(msg) {}
};

}  // namespace nextact
