#include "qcal/ecdf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qcal/errors.hpp"

namespace qcal {

EmpiricalCdf EmpiricalCdf::from_samples(std::vector<double> samples) {
  if (samples.size() < 2) {
    throw std::domain_error("EmpiricalCdf: need at least two samples");
  }
  for (double v : samples) {
    if (!std::isfinite(v)) {
      throw std::domain_error("EmpiricalCdf: samples must be finite");
    }
  }
  std::sort(samples.begin(), samples.end());
  EmpiricalCdf cdf;
  cdf.points_ = std::move(samples);
  return cdf;
}

double EmpiricalCdf::inverse(double q) const {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::domain_error("EmpiricalCdf::inverse: q must lie in [0,1]");
  }
  const std::size_t n = points_.size();
  const double dn = static_cast<double>(n);
  auto pos = [dn](std::size_t i) {
    return (static_cast<double>(i) + 0.5) / dn;
  };
  if (q <= pos(0)) return points_.front();
  if (q >= pos(n - 1)) return points_.back();

  // Locate the bracketing plotting positions by exact comparison so that a
  // q equal to some (i + 0.5)/n reproduces points_[i] bit-for-bit.
  double guess = q * dn - 0.5;
  auto i = static_cast<std::size_t>(std::max(0.0, guess));
  if (i > n - 2) i = n - 2;
  while (i > 0 && pos(i) > q) --i;
  while (i < n - 2 && pos(i + 1) <= q) ++i;
  double frac = (q - pos(i)) / (pos(i + 1) - pos(i));
  return points_[i] + frac * (points_[i + 1] - points_[i]);
}

double EmpiricalCdf::evaluate(double x) const {
  auto it = std::upper_bound(points_.begin(), points_.end(), x);
  return static_cast<double>(it - points_.begin()) /
         static_cast<double>(points_.size());
}

nlohmann::json EmpiricalCdf::to_json() const {
  return nlohmann::json{{"n", points_.size()}, {"points", points_}};
}

EmpiricalCdf EmpiricalCdf::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("n") || !j.contains("points")) {
    throw IngestError("EmpiricalCdf: expected {\"n\", \"points\"}");
  }
  auto points = j.at("points").get<std::vector<double>>();
  if (j.at("n").get<std::size_t>() != points.size()) {
    throw IngestError("EmpiricalCdf: n does not match points length");
  }
  if (!std::is_sorted(points.begin(), points.end())) {
    throw IngestError("EmpiricalCdf: points must be sorted ascending");
  }
  EmpiricalCdf cdf;
  cdf.points_ = std::move(points);
  if (cdf.points_.size() < 2) {
    throw IngestError("EmpiricalCdf: need at least two points");
  }
  return cdf;
}

double ecdf_inverse(const EmpiricalCdf& cdf, double q) { return cdf.inverse(q); }

}  // namespace qcal
