#include "qcal/confidence.hpp"

#include <cmath>
#include <stdexcept>

#include "qcal/prob.hpp"

namespace qcal {

namespace {

void check_args(double p_a, double a) {
  if (!(p_a > 0.0 && p_a < 1.0)) {
    throw std::domain_error("confidence: p_a must lie in (0,1)");
  }
  if (!(a >= 0.0)) {
    throw std::domain_error("confidence: a must be non-negative");
  }
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

double gaussian_confidence(double p_a, double a) {
  check_args(p_a, a);
  return sigmoid(a * std_normal_inv_cdf(p_a));
}

double transfer_confidence(double p_a, double a, const EmpiricalCdf& cdf) {
  check_args(p_a, a);
  return sigmoid(-a * cdf.inverse(1.0 - p_a));
}

std::vector<double> spread_residual(double confidence, int num_classes) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw std::domain_error("spread_residual: confidence must lie in [0,1]");
  }
  if (num_classes < 2) {
    throw std::domain_error("spread_residual: need at least two classes");
  }
  std::vector<double> probs(static_cast<std::size_t>(num_classes),
                            (1.0 - confidence) / (num_classes - 1));
  probs[0] = confidence;
  return probs;
}

CalibrationModel CalibrationModel::make_gaussian(double a) {
  if (!(a > 0.0)) {
    throw std::domain_error("CalibrationModel: a must be positive");
  }
  CalibrationModel m;
  m.kind = ModelKind::gaussian;
  m.a = a;
  return m;
}

CalibrationModel CalibrationModel::make_transfer(double a, EmpiricalCdf cdf) {
  if (!(a > 0.0)) {
    throw std::domain_error("CalibrationModel: a must be positive");
  }
  CalibrationModel m;
  m.kind = ModelKind::transfer;
  m.a = a;
  m.cdf = std::move(cdf);
  return m;
}

double CalibrationModel::confidence(double p_a) const {
  if (kind == ModelKind::gaussian) return gaussian_confidence(p_a, a);
  return transfer_confidence(p_a, a, *cdf);
}

}  // namespace qcal
