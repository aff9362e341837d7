#pragma once

#include <stdexcept>

namespace poisonlab {

// Error taxonomy mirrored by the CLI exit codes:
//   std::invalid_argument / CLI parse errors -> 1 (usage)
//   DataError                                -> 2 (input data)
//   NumericError                             -> 3 (numerical failure)
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace poisonlab
