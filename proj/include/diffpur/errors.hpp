#pragma once

#include <stdexcept>
#include <string>

namespace diffpur {

// Shape mismatch or malformed extents.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration values (bad schedule parameters, empty dataset, ...).
// The CLI maps this to exit code 1; everything else maps to 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace diffpur
