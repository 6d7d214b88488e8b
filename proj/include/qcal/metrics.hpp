#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "qcal/oracle.hpp"
#include "qcal/transforms.hpp"

namespace qcal {

struct ScoredPrediction {
  Label predicted = 0;
  Label truth = 0;
  double confidence = 0.0;  // in [0,1]
};

// Fraction correct. Throws MetricError on empty input.
double accuracy(const std::vector<ScoredPrediction>& preds);

// Fifteen equal-width confidence bins. Bin b covers (b/15, (b+1)/15], with
// the first bin additionally closed at 0.
struct ReliabilityBins {
  static constexpr int kBins = 15;
  std::array<long long, kBins> count{};
  std::array<double, kBins> conf_sum{};
  std::array<long long, kBins> correct{};

  static ReliabilityBins build(const std::vector<ScoredPrediction>& preds);
  static int bin_of(double confidence);

  // Sum over bins of (n_b / N) * |acc_b - conf_b|.
  double ece() const;

  // CSV with header bin_center,count,mean_conf,acc (empty bins: nan fields).
  void write_csv(std::ostream& out) const;
};

double ece(const std::vector<ScoredPrediction>& preds);

// Mean squared distance between the spread-residual probability vector and
// the one-hot truth. Requires num_classes >= 2 and truth/predicted within
// range.
double brier(const std::vector<ScoredPrediction>& preds, int num_classes);

// Probability that a random correct prediction outranks a random incorrect
// one by confidence, ties counted half. Exact (integer arithmetic over
// pair counts). All-equal confidences return 0.5 with a warning on stderr;
// all-correct or all-incorrect inputs throw MetricError.
double auroc(const std::vector<ScoredPrediction>& preds);

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;  // two-sided, via the exact t transform with n-2 dof
};

// Requires n >= 3 and nonzero variance in both inputs.
PearsonResult pearson_r(const std::vector<double>& xs,
                        const std::vector<double>& ys);

// Everything one evaluation run reports.
struct MetricsReport {
  double acc = 0.0;
  double ece = 0.0;
  double auroc = 0.0;
  double brier = 0.0;
  std::optional<double> var_stat;
  std::optional<double> ks_stat;
  int n = 0;
  int s = 0;
  std::optional<TransformSpec> spec;
  std::optional<double> a;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

}  // namespace qcal
