#pragma once

#include <stdexcept>

namespace qafuse {

/// Input violates a data contract: malformed files, mismatched shapes,
/// non-finite scores and the like.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value, unknown config key or bad usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qafuse
