#pragma once

#include <stdexcept>

namespace neaw {

// Filesystem / stream failures. CLI maps these to exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input bytes (OFF, IDX, CSV, manifest). Messages carry the
// 1-based line number where that makes sense.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A verification contract failed (suite violation, model hash mismatch).
// CLI maps these to exit code 1.
struct VerifyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace neaw
