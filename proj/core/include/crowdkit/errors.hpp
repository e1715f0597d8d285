#pragma once

#include <stdexcept>
#include <string>

namespace crowdkit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid shapes, hyperparameters, or flag values. CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse: backward on a non-scalar, backward twice, oversized attention.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures. CLI exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Statistics that cannot be computed on the given clustering
/// (e.g. a Dunn index with zero intra-cluster diameter).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace crowdkit
