#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace symspot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPrimitive : public Error {
 public:
  using Error::Error;
};

class DegeneratePrimitive : public InvalidPrimitive {
 public:
  using InvalidPrimitive::InvalidPrimitive;
};

class EmptyDrawing : public Error {
 public:
  EmptyDrawing() : Error("drawing has no primitives") {}
};

class TooManyVertices : public Error {
 public:
  TooManyVertices(std::size_t count, std::size_t limit)
      : Error("drawing has " + std::to_string(count) + " primitives, limit is " +
              std::to_string(limit)),
        count_(count) {}
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NonScalarLoss : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

class MismatchedEdgeLists : public Error {
 public:
  using Error::Error;
};

class LabelOutOfRange : public Error {
 public:
  using Error::Error;
};

class OverlappingInstances : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. The message names the offending field.
class ParseError : public IoError {
 public:
  using IoError::IoError;
};

class VersionMismatch : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace symspot
