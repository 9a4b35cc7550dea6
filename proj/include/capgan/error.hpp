#pragma once

#include <stdexcept>
#include <string>

namespace capgan {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / model configuration mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Out-of-range hyperparameter or argument values.
struct ParamError : Error {
  using Error::Error;
};

// Violated call contracts (empty sets, non-scalar losses, ...).
struct ContractError : Error {
  using Error::Error;
};

// Bad input data (out-of-vocabulary ids, malformed corpora).
struct DataError : Error {
  using Error::Error;
};

// File I/O and parse failures.
struct IoError : Error {
  using Error::Error;
};

// Hash / manifest mismatches between artifacts.
struct IntegrityError : Error {
  using Error::Error;
};

// NaN/divergence aborts during training.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace capgan
