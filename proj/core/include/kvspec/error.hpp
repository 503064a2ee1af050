// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace kvspec {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-readable tag used by the CLI's JSON error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Caller supplied arguments that violate an operation's preconditions.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

/// A model or trace file whose manifest cannot be parsed or is missing fields.
class ManifestError : public Error {
 public:
  explicit ManifestError(const std::string& what) : Error("malformed_manifest", what) {}
};

/// Manifest and binary payload disagree on sizes.
class SizeMismatchError : public Error {
 public:
  explicit SizeMismatchError(const std::string& what) : Error("size_mismatch", what) {}
};

/// Parsed successfully but describes an inconsistent model (e.g. D != H * d).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

/// Broken internal invariant; carries layer / iteration context in the message.
class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error("internal", what) {}
};

/// Filesystem failures.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace kvspec
