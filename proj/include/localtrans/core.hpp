#pragma once

#include <stdexcept>
#include <string>

namespace localtrans {

#ifdef LOCALTRANS_SCALAR_F32
using scalar = float;
#else
using scalar = double;
#endif

// Error taxonomy. The CLI maps these onto stable exit codes:
// ConfigError/ShapeError -> 2, DataError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

} // namespace localtrans
