#pragma once

#include <stdexcept>
#include <string>

namespace incidur {

// Base for every error the library throws. The CLI maps subclasses onto exit
// codes: DataError family -> 2, anything else -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Problems with input data: malformed records, bad categories, empty strata.
class DataError : public Error {
 public:
  using Error::Error;
};

class EncodingError : public DataError {
 public:
  using DataError::DataError;
};

class PreprocessError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class SchemaMismatch : public DataError {
 public:
  using DataError::DataError;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class ArtifactError : public DataError {
 public:
  using DataError::DataError;
};

class UnsupportedVersion : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

class ChecksumMismatch : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

}  // namespace incidur
