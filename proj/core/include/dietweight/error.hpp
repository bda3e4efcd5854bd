// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dietweight {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (diary files, tables, maps).
class IngestError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by a computation, or a non-finite loss during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or API usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Not enough data to do what was asked (e.g. no windows for a setting).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace dietweight
