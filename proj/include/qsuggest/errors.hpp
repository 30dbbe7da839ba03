#pragma once

#include <stdexcept>
#include <string>

namespace qsuggest {

// Failure categories. The CLI maps each to a distinct exit code:
// config 2, data 3, numeric 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qsuggest
