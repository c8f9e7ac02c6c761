#pragma once

#include <stdexcept>
#include <string>

namespace comic {

// Non-finite values, divergence, failed numeric contracts.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed files (bad magic, truncation, garbage payload).
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent model / run configuration.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace comic
