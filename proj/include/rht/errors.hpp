#pragma once

#include <stdexcept>

namespace rht {

/// Invalid or inconsistent configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Solver could not produce a certified result (invalid interval, divergent
/// iterates); the CLI maps this to exit code 3.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File-system or file-content failure; the CLI maps this to exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rht
