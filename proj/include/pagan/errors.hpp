#pragma once

#include <stdexcept>
#include <string>

namespace pagan {

// Invalid caller-supplied values (bad window sizes, fractions, shapes at the
// API boundary). Maps to CLI exit code 1 when raised during config handling.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input that is structurally valid but carries no usable information
// (all-zero frame handed to normalize/locate_peak).
struct DegenerateInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A simulated source whose wavefront never reaches the recorded window.
struct OutOfView : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/layer shape mismatch; message names the offending layer.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss during training; message carries epoch/batch/loss context.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File I/O and format failures, with path context in the message.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pagan
