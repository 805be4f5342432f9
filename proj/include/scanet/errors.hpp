#pragma once

#include <stdexcept>
#include <string>

namespace scanet {

/// Base for every error raised by the library. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or semantically invalid input value.
class InputError : public Error {
public:
  using Error::Error;
};

/// Value outside its declared range.
class RangeError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration (rejected at load time).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Tensor dimensions disagree with a module contract.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Dataset content violates an invariant (bad label, out-of-grid target, ...).
class DataError : public Error {
public:
  using Error::Error;
};

/// Filesystem failure; the message always carries the offending path.
class IoError : public Error {
public:
  using Error::Error;
};

/// Procedural placement search ran out of retries.
class GenerationError : public Error {
public:
  GenerationError(const std::string &what, int retries)
      : Error(what + " (after " + std::to_string(retries) + " retries)"), retries_(retries) {}
  int retries() const noexcept { return retries_; }

private:
  int retries_;
};

/// Checkpoint unreadable, truncated, or stamped with another format version.
class CheckpointError : public Error {
public:
  using Error::Error;
};

/// Training produced a NaN/Inf loss.
class NonFiniteLossError : public Error {
public:
  using Error::Error;
};

} // namespace scanet
