#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "qcal/ecdf.hpp"
#include "qcal/image.hpp"
#include "qcal/oracle.hpp"
#include "qcal/transforms.hpp"

namespace qcal {

// Latent-margin shifts under the transform: row j holds, for image j,
// margin(T_d(x)) - margin(x) over d = 0..draws-1, where the margin is taken
// between the clean image's top-1 and runner-up classes (both held fixed
// across draws). Draw d uses SampleSeed{run_seed, index_offset + j, d}.
std::vector<std::vector<double>> margin_shift_draws(
    WhiteBoxOracle& oracle, const std::vector<Image>& imgs,
    const TransformSpec& spec, int draws, std::uint64_t run_seed,
    std::uint64_t index_offset = 0);

namespace serial {
// Plain-loop reference; must produce identical rows.
std::vector<std::vector<double>> margin_shift_draws(
    WhiteBoxOracle& oracle, const std::vector<Image>& imgs,
    const TransformSpec& spec, int draws, std::uint64_t run_seed,
    std::uint64_t index_offset = 0);
}  // namespace serial

// Per-sample empirical CDFs of the margin shifts evaluated on a shared grid
// spanning the pooled range, with the cross-sample mean and a 95% envelope
// at every grid point.
struct CdfEnsemble {
  static constexpr int kGridPoints = 512;

  int num_samples = 0;
  std::vector<double> grid;
  std::vector<double> mean_cdf;
  std::vector<double> lo_cdf;  // 2.5% quantile across samples
  std::vector<double> hi_cdf;  // 97.5% quantile across samples

  // Requires at least one row and every row to hold >= 2 draws. Envelope
  // quantiles use plotting-position interpolation across samples.
  static CdfEnsemble build(const std::vector<std::vector<double>>& draws);

  // Widest envelope: max over the grid of hi - lo. Near zero when every
  // sample's shift distribution matches (the shared-distribution check).
  // Needs >= 2 samples.
  double var_stat() const;

  // CSV with header x,mean_cdf,q025,q975,normal_fit; the last column is
  // Phi(x/fit_a).
  void write_csv(std::ostream& out, double fit_a) const;
};

// 50 log-spaced scales in [0.001, 100].
const std::vector<double>& default_ks_grid();

struct KsFit {
  double a = 0.0;   // best-matching normal scale
  double ks = 0.0;  // sup |mean_cdf - Phi(x/a)| at that scale
};

// Smallest sup-distance over the scale grid between the ensemble mean CDF
// and a centered normal; ties prefer the smaller scale.
KsFit ks_against_normal(const CdfEnsemble& ens,
                        const std::vector<double>& a_grid = default_ks_grid());

// Pools every draw and recenters to zero mean; the reference distribution
// for transfer calibration. Requires >= 100 pooled draws.
EmpiricalCdf learn_transfer_cdf(const std::vector<std::vector<double>>& draws);

}  // namespace qcal
