#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ssetm {

// Error taxonomy used across the library. The CLI maps these onto process
// exit codes, so throw the most specific type that applies.

// Shape or axis disagreement between tensors.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (flags, sizes, hyperparameters).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke an API precondition that is not a data or config problem.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, labels, fixations).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A metric was asked to evaluate an input outside its domain.
struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Synthetic scene generation could not satisfy its constraints.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem / serialization failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint or file format version not understood by this build.
struct VersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss. Carries the step that diverged.
struct DivergenceError : std::runtime_error {
  int64_t step;
  DivergenceError(const std::string& msg, int64_t at_step)
      : std::runtime_error(msg), step(at_step) {}
};

}  // namespace ssetm
