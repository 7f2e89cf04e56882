#pragma once

#include <stdexcept>
#include <string>

namespace repflow {

// File and format problems (missing input, malformed header, bad magic).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values escaping a computation that should have stayed finite.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace repflow
