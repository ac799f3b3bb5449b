#pragma once

#include <stdexcept>
#include <string>

namespace msfm {

// Base of all pipeline errors. CLI maps subtypes to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, schema violations, invalid configs. Exit code 2.
struct DataError : Error {
    using Error::Error;
};

// Numeric or geometric failure: degenerate inputs, solver breakdown. Exit code 3.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace msfm
