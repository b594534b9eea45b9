#pragma once

#include <stdexcept>
#include <string>

namespace inflkit {

// Error taxonomy mirrored by the CLI exit codes:
//   UsageError -> 1, DataError -> 2, NumericalError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid arguments, malformed configuration, violated preconditions.
struct UsageError : Error {
    using Error::Error;
};

// Unreadable or malformed input files, format/version mismatches.
struct DataError : Error {
    using Error::Error;
};

// Divergence, non-finite values, violated spectral conditions,
// degenerate statistics.
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace inflkit
