#pragma once

#include <optional>
#include <vector>

#include "qcal/ecdf.hpp"

namespace qcal {

// Confidence that the top-1 answer is correct, from the match rate p_a of
// transformed re-queries: 1 / (1 + exp(-a * Phi^{-1}(p_a))).
// p_a must lie in the open interval (0,1); a must be >= 0 (a == 0 gives 0.5).
double gaussian_confidence(double p_a, double a);

// Same link but driven by a learned noise distribution instead of the
// normal: 1 / (1 + exp(a * F^{-1}(1 - p_a))).
double transfer_confidence(double p_a, double a, const EmpiricalCdf& cdf);

// Full probability vector over `num_classes` classes with the predicted
// class at index 0 and the remainder spread evenly over the others.
std::vector<double> spread_residual(double confidence, int num_classes);

enum class ModelKind { gaussian, transfer };

// A fitted confidence map. `a` is shared across all inputs; the transfer
// variant additionally carries the learned latent-noise CDF.
struct CalibrationModel {
  ModelKind kind = ModelKind::gaussian;
  double a = 1.0;                    // > 0
  std::optional<EmpiricalCdf> cdf;   // present iff kind == transfer

  static CalibrationModel make_gaussian(double a);
  static CalibrationModel make_transfer(double a, EmpiricalCdf cdf);

  double confidence(double p_a) const;
};

}  // namespace qcal
