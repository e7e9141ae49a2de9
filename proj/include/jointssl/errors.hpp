#pragma once

#include <stdexcept>
#include <string>

namespace jointssl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor dimensions incompatible with an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An input file could not be read or decoded.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Input data violates the expected schema (bad column, label out of range).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A class has too few samples for the requested number of folds.
class StratificationError : public Error {
 public:
  using Error::Error;
};

/// Imported weights do not match the model layout.
class WeightImportError : public Error {
 public:
  using Error::Error;
};

/// A loss component became non-finite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Filesystem / serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (e.g. unlabeled sample in an
/// evaluation set).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace jointssl
