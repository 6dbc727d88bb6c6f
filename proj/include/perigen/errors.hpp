#pragma once

#include <stdexcept>
#include <string>

namespace perigen {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TangentPole : Error {
  using Error::Error;
};

struct Overflow : Error {
  using Error::Error;
};

struct UnboundedVariant : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// Training diverged; the caller records a failed run.
struct NonFiniteLoss : Error {
  using Error::Error;
};

struct InsufficientDiversity : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

}  // namespace perigen
