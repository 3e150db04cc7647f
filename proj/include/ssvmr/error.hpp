#pragma once

#include <stdexcept>
#include <string>

namespace ssvmr {

// Base for every error raised by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on a caller-supplied argument.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Shape mismatch between tensors or between data and model.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// NaN/Inf produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed bank, checkpoint, or manifest file.
class FormatError : public Error {
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

// Input that admits no meaningful fit (e.g. all GMM observations equal).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssvmr
