#pragma once

#include <stdexcept>
#include <string>

namespace mvprof {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Validation family: bad shapes, configs, contracts, file formats.
// The CLI maps these to exit code 1.
struct DimError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct ContractError : Error {
    using Error::Error;
};
struct IndexError : Error {
    using Error::Error;
};
struct LengthError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};

// Numeric family: non-finite values, failed finite-difference checks.
// The CLI maps these to exit code 2.
struct NumericError : Error {
    using Error::Error;
};

} // namespace mvprof
