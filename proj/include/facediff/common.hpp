#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace facediff {

// Bad call arguments (shape mismatch, out-of-range step, non-finite input).
struct InvalidInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Base for file-format failures. Subclasses are distinct error kinds so
// callers and tests can tell them apart.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : FormatError {
  using FormatError::FormatError;
};
struct TruncatedPayloadError : FormatError {
  using FormatError::FormatError;
};
struct DimensionOverflowError : FormatError {
  using FormatError::FormatError;
};
struct UnsupportedVersionError : FormatError {
  using FormatError::FormatError;
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInputError(msg);
}

}  // namespace facediff
