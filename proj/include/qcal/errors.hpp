#pragma once

#include <stdexcept>

namespace qcal {

// Error taxonomy. The CLI maps each class to a distinct exit code; the
// library throws and never exits.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A playback log has no entry for the queried image.
struct MissingPredictionError : OracleError {
  using OracleError::OracleError;
};

// A white-box operation was requested from a black-box oracle.
struct CapabilityError : OracleError {
  using OracleError::OracleError;
};

struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A metric is undefined on the given inputs (e.g. AUROC with one class).
struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qcal
