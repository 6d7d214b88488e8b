#include "qcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <ostream>

#include "qcal/errors.hpp"
#include "qcal/format.hpp"

namespace qcal {

double accuracy(const std::vector<ScoredPrediction>& preds) {
  if (preds.empty()) throw MetricError("accuracy: empty input");
  long long correct = 0;
  for (const auto& p : preds) correct += (p.predicted == p.truth) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

int ReliabilityBins::bin_of(double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw MetricError("reliability: confidence outside [0,1]");
  // Bin b is (b/15, (b+1)/15]; 0 lands in bin 0.
  int b = static_cast<int>(std::ceil(confidence * kBins)) - 1;
  return std::clamp(b, 0, kBins - 1);
}

ReliabilityBins ReliabilityBins::build(
    const std::vector<ScoredPrediction>& preds) {
  if (preds.empty()) throw MetricError("reliability: empty input");
  ReliabilityBins bins;
  for (const auto& p : preds) {
    int b = bin_of(p.confidence);
    bins.count[b] += 1;
    bins.conf_sum[b] += p.confidence;
    bins.correct[b] += (p.predicted == p.truth) ? 1 : 0;
  }
  return bins;
}

double ReliabilityBins::ece() const {
  long long total = 0;
  for (int b = 0; b < kBins; ++b) total += count[b];
  if (total == 0) throw MetricError("reliability: empty bins");
  double sum = 0.0;
  for (int b = 0; b < kBins; ++b) {
    if (count[b] == 0) continue;
    double n_b = static_cast<double>(count[b]);
    double acc_b = static_cast<double>(correct[b]) / n_b;
    double conf_b = conf_sum[b] / n_b;
    sum += (n_b / static_cast<double>(total)) * std::abs(acc_b - conf_b);
  }
  return sum;
}

void ReliabilityBins::write_csv(std::ostream& out) const {
  out << "bin_center,count,mean_conf,acc\n";
  for (int b = 0; b < kBins; ++b) {
    double center = (b + 0.5) / kBins;
    out << format_double(center) << ',' << count[b] << ',';
    if (count[b] == 0) {
      out << "nan,nan\n";
    } else {
      double n_b = static_cast<double>(count[b]);
      out << format_double(conf_sum[b] / n_b) << ','
          << format_double(static_cast<double>(correct[b]) / n_b) << '\n';
    }
  }
}

double ece(const std::vector<ScoredPrediction>& preds) {
  return ReliabilityBins::build(preds).ece();
}

double brier(const std::vector<ScoredPrediction>& preds, int num_classes) {
  if (preds.empty()) throw MetricError("brier: empty input");
  if (num_classes < 2) throw MetricError("brier: need at least two classes");
  double sum = 0.0;
  for (const auto& p : preds) {
    if (p.predicted < 0 || p.predicted >= num_classes || p.truth < 0 ||
        p.truth >= num_classes)
      throw MetricError("brier: label outside class range");
    double conf = p.confidence;
    double rest = (1.0 - conf) / (num_classes - 1);
    double sq;
    if (p.predicted == p.truth) {
      sq = (conf - 1.0) * (conf - 1.0) + (num_classes - 1) * rest * rest;
    } else {
      sq = conf * conf + (rest - 1.0) * (rest - 1.0) +
           (num_classes - 2) * rest * rest;
    }
    sum += sq;
  }
  return sum / static_cast<double>(preds.size());
}

double auroc(const std::vector<ScoredPrediction>& preds) {
  std::vector<double> pos;  // correct predictions
  std::vector<double> neg;
  for (const auto& p : preds) {
    if (p.predicted == p.truth)
      pos.push_back(p.confidence);
    else
      neg.push_back(p.confidence);
  }
  if (pos.empty() || neg.empty())
    throw MetricError("auroc: need both correct and incorrect predictions");
  std::sort(neg.begin(), neg.end());
  bool all_equal = true;
  for (const auto& p : preds)
    if (p.confidence != preds.front().confidence) all_equal = false;
  if (all_equal) {
    std::cerr << "warning: auroc over identical confidences; returning 0.5\n";
    return 0.5;
  }
  // 2U = sum over (pos, neg) pairs of 2*[pos > neg] + [pos == neg]; integer
  // so results match pairwise brute force exactly.
  std::uint64_t two_u = 0;
  for (double c : pos) {
    auto lo = std::lower_bound(neg.begin(), neg.end(), c);
    auto hi = std::upper_bound(lo, neg.end(), c);
    two_u += 2 * static_cast<std::uint64_t>(lo - neg.begin());
    two_u += static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(two_u) /
         (2.0 * static_cast<double>(pos.size()) *
          static_cast<double>(neg.size()));
}

namespace {

// Continued fraction for the regularized incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double qab = a + b;
  double qap = a + 1.0;
  double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

PearsonResult pearson_r(const std::vector<double>& xs,
                        const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw MetricError("pearson: size mismatch");
  std::size_t n = xs.size();
  if (n < 3) throw MetricError("pearson: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = xs[i] - mx;
    double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw MetricError("pearson: zero variance input");
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);
  double dof = static_cast<double>(n) - 2.0;
  PearsonResult res;
  res.r = r;
  if (1.0 - r * r <= 0.0) {
    res.p = 0.0;
    return res;
  }
  double t2 = r * r * dof / (1.0 - r * r);
  // Two-sided p from the t distribution: P(|T| >= t) = I_{dof/(dof+t^2)}.
  res.p = betai(dof / 2.0, 0.5, dof / (dof + t2));
  res.p = std::clamp(res.p, 0.0, 1.0);
  return res;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["acc"] = acc;
  j["ece"] = ece;
  j["auroc"] = auroc;
  j["brier"] = brier;
  j["var"] = var_stat ? nlohmann::json(*var_stat) : nlohmann::json();
  j["ks"] = ks_stat ? nlohmann::json(*ks_stat) : nlohmann::json();
  j["n"] = n;
  j["s"] = s;
  j["spec"] = spec ? spec_to_json(*spec) : nlohmann::json();
  j["a"] = a ? nlohmann::json(*a) : nlohmann::json();
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.acc = j.at("acc").get<double>();
    r.ece = j.at("ece").get<double>();
    r.auroc = j.at("auroc").get<double>();
    r.brier = j.at("brier").get<double>();
    if (!j.at("var").is_null()) r.var_stat = j.at("var").get<double>();
    if (!j.at("ks").is_null()) r.ks_stat = j.at("ks").get<double>();
    r.n = j.at("n").get<int>();
    r.s = j.at("s").get<int>();
    if (!j.at("spec").is_null()) r.spec = spec_from_json(j.at("spec"));
    if (!j.at("a").is_null()) r.a = j.at("a").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("bad metrics json: ") + e.what());
  }
}

}  // namespace qcal
