// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

#include <stdexcept>
#include <string>

namespace convoeval {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed an argument outside an operation's domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a structural invariant (duplicate ids, bad references).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Model fitting could not proceed with the data given.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Statistic is undefined for the input (e.g. zero variance).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A serialized artifact does not match the expected schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace convoeval
