#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace thermo {

// Operand shapes are invalid for the requested operation. Raised before any
// computation touches the data.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed external data: image files, manifests, checkpoints.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Parse failure at a known byte offset of the input stream.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : DataError(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// The ROI pipeline found no foreground at all.
class NoRoiError : public DataError {
 public:
  explicit NoRoiError(const std::string& what) : DataError(what) {}
};

// Training produced a non-finite loss and was aborted.
class DivergedError : public std::runtime_error {
 public:
  explicit DivergedError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace thermo
