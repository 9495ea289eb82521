// Error types shared across modules.

#pragma once

#include <stdexcept>

namespace garnn {

/// Problems with input files: malformed rows, unknown ids, bad values.
/// Messages carry the file and line number where one applies.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings that cannot work together or with the supplied data.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint used with a series or graph it was not trained on, or a
/// checkpoint format this build cannot read.
class CheckpointMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace garnn
