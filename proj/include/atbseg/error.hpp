#pragma once

#include <stdexcept>
#include <string>

namespace atbseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Anything wrong with input data: unreadable files, bad dimensions, bad annotations.
class DataError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateContourError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Tensor or grid dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace atbseg
