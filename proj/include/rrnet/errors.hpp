#pragma once

#include <stdexcept>
#include <string>

namespace rrnet {

// Dimension/shape violation. The offending axis ("batch", "channel",
// "height", "width", "kernel", "spatial") is carried alongside the message.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string axis, const std::string& message)
      : std::invalid_argument(message), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

// Backward requested on a tensor that no live tape produced.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad arguments or preconditions outside the pure shape domain.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unknown keys / unparsable values in a config file.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed on-disk data: bad magic, unknown version, truncation.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure (open/read/write/rename).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rrnet
