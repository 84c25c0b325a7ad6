#pragma once

#include <stdexcept>
#include <string>

namespace sepsis {

// Bad user-supplied configuration (flags, config files, impossible grids).
// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem-level failures. CLI exit code 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data; the message carries file and line number.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Contract violations: shape mismatches, invalid codes, degenerate cohorts.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sepsis
