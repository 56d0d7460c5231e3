#pragma once

#include <stdexcept>
#include <string>

namespace pricequake {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: duplicate ids, invalid parameters, empty search space.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad input data: non-finite news, length mismatches, malformed rows.
class InputError : public Error {
 public:
  using Error::Error;
};

// A run produced a non-finite quantity and was aborted.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// An operation was called in a state its contract forbids.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A relaxation failed to terminate within the generation cap.
class RunawayError : public Error {
 public:
  using Error::Error;
};

}  // namespace pricequake
