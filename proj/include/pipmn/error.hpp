#pragma once

#include <stdexcept>
#include <string>

namespace pipmn {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor rank/extent mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Bad argument values: config fields, out-of-range targets, invalid ranges.
struct ValueError : Error {
  using Error::Error;
};

// Malformed input files: WAV, CSV, checkpoints, feature caches.
struct ParseError : Error {
  using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
  using Error::Error;
};

// NaN/Inf produced by a forward op, or training divergence.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace pipmn
