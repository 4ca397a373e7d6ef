// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cfedit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or image dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numeric quantity became NaN/inf or a run diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfedit
