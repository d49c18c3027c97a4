// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#pragma once

#include <stdexcept>
#include <string>

namespace taskmat {

/// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments or data that violates a documented invariant. CLI exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Shapes that do not chain (map vs. bundle, head vs. map, ...).
class DimensionMismatch : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Filesystem failures and malformed files. CLI exit code 2.
class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public IoError {
public:
    using IoError::IoError;
};

class BadMagic : public FormatError {
public:
    using FormatError::FormatError;
};

class UnsupportedVersion : public FormatError {
public:
    using FormatError::FormatError;
};

/// File ends before the payload its header declares.
class TruncatedPayload : public FormatError {
public:
    using FormatError::FormatError;
};

/// Header fields disagree with each other or with the payload: unsorted
/// layers, labels out of range, trailing bytes, overflowing sizes.
class LayoutMismatch : public FormatError {
public:
    using FormatError::FormatError;
};

class MalformedMetadata : public FormatError {
public:
    using FormatError::FormatError;
};

/// NaN or Inf found in a stored numeric payload.
class CorruptPayload : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace taskmat
