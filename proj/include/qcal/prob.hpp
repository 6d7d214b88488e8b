#pragma once

namespace qcal {

// Standard normal density.
double std_normal_pdf(double x);

// Standard normal CDF, accurate in both tails.
double std_normal_cdf(double x);

// Inverse of the standard normal CDF on the open interval (0,1).
// Throws std::domain_error for p outside (0,1).
// Round-trips through std_normal_cdf to within 1e-9 on [1e-6, 1-1e-6].
double std_normal_inv_cdf(double p);

}  // namespace qcal
