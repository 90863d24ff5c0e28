#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rfp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor/signal extents do not admit the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

/// Class label outside [0, N).
struct LabelError : Error {
  using Error::Error;
};

/// API misuse (bad arguments, empty inputs where content is required).
struct UsageError : Error {
  using Error::Error;
};

/// Input is degenerate for the operation (e.g. all-zero frame).
struct DegenerateInput : Error {
  using Error::Error;
};

/// On-disk artifact is corrupt or truncated. Carries the byte offset at
/// which decoding failed.
struct FormatError : Error {
  FormatError(const std::string& msg, std::size_t offset)
      : Error(msg + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

/// Optimization diverged. Carries the epoch at which the loss went non-finite.
struct TrainingError : Error {
  TrainingError(const std::string& msg, int at_epoch)
      : Error(msg + " (epoch " + std::to_string(at_epoch) + ")"), epoch(at_epoch) {}
  int epoch;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace rfp
