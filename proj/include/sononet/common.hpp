#pragma once

#include <stdexcept>
#include <string>

namespace sononet {

// Contract violations: bad shapes, unknown names, out-of-range arguments.
// Thrown with a diagnostic naming the offending values.
struct invalid_argument_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File / format problems: missing files, bad magic, truncated data.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses and other numerical breakdowns.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sononet
