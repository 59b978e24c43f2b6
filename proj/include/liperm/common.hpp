#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace liperm {

// Bad user-supplied configuration (dimensions, widths, option values).
// The CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse detected at runtime (empty tape, backward before forward, ...).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// Problem size exceeds a configured cap; the caller must subsample or coarsen.
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A training loss went non-finite or crossed the divergence threshold.
struct DivergenceError : std::runtime_error {
  DivergenceError(std::string msg, int iteration)
      : std::runtime_error(std::move(msg)), iteration(iteration) {}
  int iteration = -1;
};

}  // namespace liperm
