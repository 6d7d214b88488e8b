#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "qcal/confidence.hpp"
#include "qcal/image.hpp"
#include "qcal/oracle.hpp"
#include "qcal/transforms.hpp"

namespace qcal {

// Match-rate estimate for one sample: one clean base query fixes the label,
// then s transformed queries count agreements. The raw rate is clipped away
// from {0,1} by half a count so the confidence link stays finite.
struct PaEstimate {
  int sample_id = 0;
  Label base_label = 0;
  int matches = 0;
  int s = 0;
  double p_a_raw = 0.0;
  double p_a_clipped = 0.0;

  // Requires s >= 1 and 0 <= matches <= s.
  static PaEstimate from_counts(int sample_id, Label base_label, int matches,
                                int s);
};

// Issues exactly s + 1 oracle queries (before caching). The transform draw
// for query i uses SampleSeed{run_seed, sample_index, i}, so a replay with
// the same seed re-issues byte-identical queries. A failed query aborts the
// whole estimate. s == 0 is the no-transform baseline: only the base query
// runs and the match rate is reported as 1.
PaEstimate estimate_pa(Oracle& oracle, const Image& img,
                       const TransformSpec& spec, int s,
                       std::uint64_t run_seed, std::uint64_t sample_index = 0);

// Batch form; sample i uses sample_index = index_offset + i and
// sample_id = static_cast<int>(index_offset) + i.
std::vector<PaEstimate> estimate_dataset(Oracle& oracle,
                                         const std::vector<Image>& imgs,
                                         const TransformSpec& spec, int s,
                                         std::uint64_t run_seed,
                                         std::uint64_t index_offset = 0);

namespace serial {
// Plain-loop reference; must produce identical estimates.
std::vector<PaEstimate> estimate_dataset(Oracle& oracle,
                                         const std::vector<Image>& imgs,
                                         const TransformSpec& spec, int s,
                                         std::uint64_t run_seed,
                                         std::uint64_t index_offset = 0);
}  // namespace serial

// The hyperparameter grid the calibration fit searches.
const std::vector<double>& default_a_grid();

struct FitTraceRow {
  TransformSpec spec;
  double a = 0.0;
  double acc = 0.0;
  double ece = 0.0;
  double brier = 0.0;
};

struct FitResult {
  TransformSpec best_spec;
  double best_a = 0.0;
  double objective = 0.0;  // validation ECE of the winner
  std::vector<FitTraceRow> trace;

  nlohmann::json to_json() const;
  static FitResult from_json(const nlohmann::json& j);
};

// Scores every a on the grid against validation truth labels and keeps the
// lowest ECE, breaking ties by lower Brier, then by smaller a. `spec` only
// annotates the result and trace rows. For ModelKind::transfer, `cdf` must
// be non-null.
FitResult fit_a(const std::vector<PaEstimate>& estimates,
                const std::vector<Label>& truth, const TransformSpec& spec,
                int num_classes, ModelKind kind = ModelKind::gaussian,
                const EmpiricalCdf* cdf = nullptr,
                const std::vector<double>& a_grid = default_a_grid());

// Joint search over (spec, a): estimates the validation split once per spec,
// then scores the a grid. Winner selection matches fit_a.
FitResult fit_joint(Oracle& oracle, const std::vector<Image>& val_imgs,
                    const std::vector<Label>& val_truth,
                    const std::vector<TransformSpec>& specs, int s,
                    std::uint64_t run_seed, int num_classes,
                    ModelKind kind = ModelKind::gaussian,
                    const EmpiricalCdf* cdf = nullptr,
                    const std::vector<double>& a_grid = default_a_grid());

// Maps every clipped match rate through the fitted model.
std::vector<double> assign_confidences(const std::vector<PaEstimate>& estimates,
                                       const CalibrationModel& model);

// CSV with header sample_id,base_label,matches,s,p_a_raw,p_a_clipped,confidence.
// Values round-trip exactly (shortest-repr doubles).
void write_estimates_csv(std::ostream& out,
                         const std::vector<PaEstimate>& estimates,
                         const std::vector<double>& confidences);
struct EstimateRows {
  std::vector<PaEstimate> estimates;
  std::vector<double> confidences;
};
EstimateRows read_estimates_csv(std::istream& in);

}  // namespace qcal
