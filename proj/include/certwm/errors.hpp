#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace certwm {

struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeTooSmall : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File could not be parsed; byte_offset points at the first offending byte.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (byte " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

struct UnsupportedFormat : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IOError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// External-decoder bridge failures.
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimeoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ChildExit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InitNotAdversarial : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Decoder failure during batch collection, tagged with the sample index.
struct DecodeSampleError : std::runtime_error {
  DecodeSampleError(std::size_t sample, const std::string& msg)
      : std::runtime_error("sample " + std::to_string(sample) + ": " + msg),
        sample_index(sample) {}
  std::size_t sample_index;
};

}  // namespace certwm
