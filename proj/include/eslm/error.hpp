#pragma once

#include <stdexcept>

namespace eslm {

// Invalid configuration or shape mismatch, detected before any heavy compute.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input data unusable: empty corpus, nothing left to score, and similar.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values encountered or produced mid-computation.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents (config files, metrics CSV, checkpoints).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace eslm
