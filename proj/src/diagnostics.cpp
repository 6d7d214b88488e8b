#include "qcal/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <ostream>

#include "qcal/errors.hpp"
#include "qcal/format.hpp"
#include "qcal/prob.hpp"
#include "qcal/rng.hpp"

namespace qcal {

namespace {

std::vector<std::vector<double>> margin_shift_impl(
    WhiteBoxOracle& oracle, const std::vector<Image>& imgs,
    const TransformSpec& spec, int draws, std::uint64_t run_seed,
    std::uint64_t index_offset, bool parallel) {
  if (draws < 1) throw ConfigError("diagnostics: draws must be >= 1");
  std::vector<std::vector<double>> out(imgs.size());
  std::atomic<bool> failed{false};
  std::exception_ptr err;
  std::int64_t n = static_cast<std::int64_t>(imgs.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::int64_t j = 0; j < n; ++j) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      const Image& img = imgs[static_cast<std::size_t>(j)];
      Label a = oracle.top1(img);
      Label b = oracle.runner_up(img);
      double base = oracle.latent_margin(img, a, b);
      std::vector<double> row(static_cast<std::size_t>(draws));
      for (int d = 0; d < draws; ++d) {
        SampleSeed seed{run_seed, index_offset + static_cast<std::uint64_t>(j),
                        static_cast<std::uint64_t>(d)};
        Image t = parallel ? apply_transform(img, spec, seed)
                           : serial::apply_transform(img, spec, seed);
        row[static_cast<std::size_t>(d)] =
            oracle.latent_margin(t, a, b) - base;
      }
      out[static_cast<std::size_t>(j)] = std::move(row);
    } catch (...) {
#pragma omp critical(qcal_diag_err)
      {
        if (!failed.exchange(true)) err = std::current_exception();
      }
    }
  }
  if (failed.load()) std::rethrow_exception(err);
  return out;
}

}  // namespace

std::vector<std::vector<double>> margin_shift_draws(
    WhiteBoxOracle& oracle, const std::vector<Image>& imgs,
    const TransformSpec& spec, int draws, std::uint64_t run_seed,
    std::uint64_t index_offset) {
  return margin_shift_impl(oracle, imgs, spec, draws, run_seed, index_offset,
                           true);
}

namespace serial {
std::vector<std::vector<double>> margin_shift_draws(
    WhiteBoxOracle& oracle, const std::vector<Image>& imgs,
    const TransformSpec& spec, int draws, std::uint64_t run_seed,
    std::uint64_t index_offset) {
  return margin_shift_impl(oracle, imgs, spec, draws, run_seed, index_offset,
                           false);
}
}  // namespace serial

CdfEnsemble CdfEnsemble::build(const std::vector<std::vector<double>>& draws) {
  if (draws.empty()) throw MetricError("cdf ensemble: no samples");
  for (const auto& row : draws)
    if (row.size() < 2)
      throw MetricError("cdf ensemble: need >= 2 draws per sample");

  double lo = draws[0][0], hi = draws[0][0];
  for (const auto& row : draws)
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }

  CdfEnsemble ens;
  ens.num_samples = static_cast<int>(draws.size());
  ens.grid.resize(kGridPoints);
  for (int g = 0; g < kGridPoints; ++g)
    ens.grid[g] = lo + (hi - lo) * static_cast<double>(g) / (kGridPoints - 1);

  std::vector<EmpiricalCdf> cdfs;
  cdfs.reserve(draws.size());
  for (const auto& row : draws) cdfs.push_back(EmpiricalCdf::from_samples(row));

  std::size_t n = cdfs.size();
  ens.mean_cdf.resize(kGridPoints);
  ens.lo_cdf.resize(kGridPoints);
  ens.hi_cdf.resize(kGridPoints);
  std::vector<double> column(n);
  for (int g = 0; g < kGridPoints; ++g) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      column[j] = cdfs[j].evaluate(ens.grid[g]);
      sum += column[j];
    }
    ens.mean_cdf[g] = sum / static_cast<double>(n);
    if (n == 1) {
      ens.lo_cdf[g] = column[0];
      ens.hi_cdf[g] = column[0];
    } else {
      auto col = EmpiricalCdf::from_samples(column);
      ens.lo_cdf[g] = col.inverse(0.025);
      ens.hi_cdf[g] = col.inverse(0.975);
    }
  }
  return ens;
}

double CdfEnsemble::var_stat() const {
  if (num_samples < 2)
    throw MetricError("var: need >= 2 samples in the ensemble");
  double widest = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    widest = std::max(widest, hi_cdf[g] - lo_cdf[g]);
  return widest;
}

void CdfEnsemble::write_csv(std::ostream& out, double fit_a) const {
  out << "x,mean_cdf,q025,q975,normal_fit\n";
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out << format_double(grid[g]) << ',' << format_double(mean_cdf[g]) << ','
        << format_double(lo_cdf[g]) << ',' << format_double(hi_cdf[g]) << ','
        << format_double(std_normal_cdf(grid[g] / fit_a)) << '\n';
  }
}

const std::vector<double>& default_ks_grid() {
  static const std::vector<double> grid = [] {
    std::vector<double> g(50);
    double lo = std::log(0.001), hi = std::log(100.0);
    for (int i = 0; i < 50; ++i)
      g[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / 49.0);
    return g;
  }();
  return grid;
}

KsFit ks_against_normal(const CdfEnsemble& ens,
                        const std::vector<double>& a_grid) {
  if (a_grid.empty()) throw ConfigError("ks: empty scale grid");
  std::vector<double> scales = a_grid;
  std::sort(scales.begin(), scales.end());
  KsFit best;
  bool have = false;
  for (double a : scales) {
    if (!(a > 0.0)) throw ConfigError("ks: scales must be positive");
    double sup = 0.0;
    for (std::size_t g = 0; g < ens.grid.size(); ++g)
      sup = std::max(sup,
                     std::abs(ens.mean_cdf[g] - std_normal_cdf(ens.grid[g] / a)));
    if (!have || sup < best.ks) {
      have = true;
      best.a = a;
      best.ks = sup;
    }
  }
  return best;
}

EmpiricalCdf learn_transfer_cdf(const std::vector<std::vector<double>>& draws) {
  std::vector<double> pooled;
  for (const auto& row : draws) pooled.insert(pooled.end(), row.begin(), row.end());
  if (pooled.size() < 100)
    throw ConfigError("transfer cdf: need >= 100 pooled draws");
  double mean = 0.0;
  for (double v : pooled) mean += v;
  mean /= static_cast<double>(pooled.size());
  for (double& v : pooled) v -= mean;
  return EmpiricalCdf::from_samples(std::move(pooled));
}

}  // namespace qcal
