// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dkrn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (unknown keys, rules that reject everything).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input data: corpus files, embeddings, checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape mismatch inside the differentiable kernel.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Operation not permitted in the current state (e.g. replying to a finished conversation).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace dkrn
