#pragma once

#include <stdexcept>
#include <string>

namespace mvcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model definition is malformed (shapes, constants, unknown names).
class ModelDefinitionError : public Error {
 public:
  using Error::Error;
};

/// A coefficient evaluation produced a non-finite value.
class NumericOverflowError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

/// Exact solvers are capped in size; the message suggests subsampling.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration (CLI flags, JSON documents, missing artifacts).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvcn
