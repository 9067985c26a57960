#pragma once

#include <stdexcept>
#include <string>

namespace capslab {

/// Dimension or shape disagreement between tensors, layers or buffers.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid construction-time configuration (layer sizes, hyperparameters, experiment files).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// API misuse detected at runtime (stale tape, mid-stream channel change, oversampled buffer).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence encountered while training.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Environment received an action it cannot simulate.
struct EnvFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Signal unsuitable for spectral analysis.
struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line where parsing stopped.
struct ParseError : std::runtime_error {
  long line;
  ParseError(const std::string& msg, long line_no)
      : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

}  // namespace capslab
