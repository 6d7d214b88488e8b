#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace qcal {

// Empirical distribution over at least two finite samples. Duplicate sample
// values are retained so tied observations keep their full weight.
class EmpiricalCdf {
 public:
  // Sorts a copy of `samples`. Requires n >= 2 and all values finite.
  static EmpiricalCdf from_samples(std::vector<double> samples);

  // Quantile by linear interpolation between plotting positions
  // (i - 0.5)/n; clipped to the extreme samples outside that span.
  // Throws std::domain_error for q outside [0,1].
  double inverse(double q) const;

  // Right-continuous step CDF: fraction of samples <= x.
  double evaluate(double x) const;

  std::size_t size() const { return points_.size(); }
  const std::vector<double>& points() const { return points_; }

  // Wire format {"n": <int>, "points": [...]}; round-trips bit-exactly.
  nlohmann::json to_json() const;
  static EmpiricalCdf from_json(const nlohmann::json& j);

 private:
  EmpiricalCdf() = default;
  std::vector<double> points_;  // sorted ascending, duplicates retained
};

// Named free-function form of EmpiricalCdf::inverse.
double ecdf_inverse(const EmpiricalCdf& cdf, double q);

}  // namespace qcal
