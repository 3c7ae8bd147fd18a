#pragma once

#include <stdexcept>
#include <string>

namespace gmseg {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image extents that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition (value ranges, scalar roots).
class ContractError : public Error {
 public:
  using Error::Error;
};

class InvalidConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// File is readable but uses a layout or datatype outside the supported subset.
class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

/// Sidecar or config document is missing a required field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Length or checksum mismatch inside a binary container.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in a loss or gradient.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gmseg
