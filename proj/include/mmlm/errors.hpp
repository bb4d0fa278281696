#pragma once

#include <stdexcept>
#include <string>

namespace mmlm {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can catch one type and still dispatch on the concrete kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Feature / checkpoint file problems.
class FormatError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DuplicateIdError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace mmlm
