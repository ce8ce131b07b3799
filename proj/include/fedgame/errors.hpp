#pragma once

#include <stdexcept>
#include <string>

namespace fedgame {

// Invalid scenario files, flag values, or config field violations. CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical integrity violations: non-PSD inner product tables, distance values
// negative beyond round-off tolerance, best responses outside [0,1] beyond
// clamp tolerance. CLI exit code 4. Solver non-convergence is not an error;
// it is reported in result structs and mapped to CLI exit code 3.
struct IntegrityError : std::runtime_error {
  explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedgame
