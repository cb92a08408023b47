#pragma once

#include <stdexcept>
#include <string>

namespace ctap {

// Base of every error thrown by the library. The CLI catches these and
// reports the stage that produced them.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

// Mixing angle undefined: both tunnelling rates are zero.
struct DegenerateAngle : Error {
  using Error::Error;
};

// Field evaluation point closer to a wire than the guard distance.
struct ProximityError : Error {
  using Error::Error;
};

struct GridMismatch : Error {
  using Error::Error;
};

// A guide minimum was requested on a slice where it merged with a neighbour.
struct MinimumAbsent : Error {
  using Error::Error;
};

struct NonConvergence : Error {
  using Error::Error;
};

// Probability reached the periodic boundary shell.
struct EdgeBreach : Error {
  using Error::Error;
};

struct FormatError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace ctap
