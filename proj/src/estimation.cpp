#include "qcal/estimation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "qcal/errors.hpp"
#include "qcal/format.hpp"
#include "qcal/metrics.hpp"
#include "qcal/rng.hpp"

namespace qcal {

PaEstimate PaEstimate::from_counts(int sample_id, Label base_label,
                                   int matches, int s) {
  if (s < 1) throw IngestError("estimate: s must be >= 1");
  if (matches < 0 || matches > s)
    throw IngestError("estimate: matches outside [0, s]");
  PaEstimate e;
  e.sample_id = sample_id;
  e.base_label = base_label;
  e.matches = matches;
  e.s = s;
  e.p_a_raw = static_cast<double>(matches) / static_cast<double>(s);
  double lo = 1.0 / (2.0 * s);
  e.p_a_clipped = std::clamp(e.p_a_raw, lo, 1.0 - lo);
  return e;
}

PaEstimate estimate_pa(Oracle& oracle, const Image& img,
                       const TransformSpec& spec, int s,
                       std::uint64_t run_seed, std::uint64_t sample_index) {
  if (s < 0) throw ConfigError("estimate: negative query count");
  Label base = oracle.top1(img);
  if (s == 0) {
    PaEstimate e;
    e.sample_id = static_cast<int>(sample_index);
    e.base_label = base;
    e.matches = 0;
    e.s = 0;
    e.p_a_raw = 1.0;
    e.p_a_clipped = 1.0;
    return e;
  }
  int matches = 0;
  for (int i = 0; i < s; ++i) {
    SampleSeed seed{run_seed, sample_index, static_cast<std::uint64_t>(i)};
    Image t = apply_transform(img, spec, seed);
    if (oracle.top1(t) == base) ++matches;
  }
  return PaEstimate::from_counts(static_cast<int>(sample_index), base, matches,
                                 s);
}

namespace {

std::vector<PaEstimate> estimate_dataset_impl(Oracle& oracle,
                                              const std::vector<Image>& imgs,
                                              const TransformSpec& spec, int s,
                                              std::uint64_t run_seed,
                                              std::uint64_t index_offset,
                                              bool parallel) {
  std::vector<PaEstimate> out(imgs.size());
  std::atomic<bool> failed{false};
  std::exception_ptr err;
  std::int64_t n = static_cast<std::int64_t>(imgs.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      out[static_cast<std::size_t>(i)] =
          estimate_pa(oracle, imgs[static_cast<std::size_t>(i)], spec, s,
                      run_seed, index_offset + static_cast<std::uint64_t>(i));
    } catch (...) {
#pragma omp critical(qcal_estimate_err)
      {
        if (!failed.exchange(true)) err = std::current_exception();
      }
    }
  }
  if (failed.load()) std::rethrow_exception(err);
  return out;
}

}  // namespace

std::vector<PaEstimate> estimate_dataset(Oracle& oracle,
                                         const std::vector<Image>& imgs,
                                         const TransformSpec& spec, int s,
                                         std::uint64_t run_seed,
                                         std::uint64_t index_offset) {
  return estimate_dataset_impl(oracle, imgs, spec, s, run_seed, index_offset,
                               true);
}

namespace serial {
std::vector<PaEstimate> estimate_dataset(Oracle& oracle,
                                         const std::vector<Image>& imgs,
                                         const TransformSpec& spec, int s,
                                         std::uint64_t run_seed,
                                         std::uint64_t index_offset) {
  return estimate_dataset_impl(oracle, imgs, spec, s, run_seed, index_offset,
                               false);
}
}  // namespace serial

const std::vector<double>& default_a_grid() {
  static const std::vector<double> grid = {0.001, 0.005, 0.01, 0.05, 0.1,
                                           0.5,   1.0,   10.0, 100.0};
  return grid;
}

nlohmann::json FitResult::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : trace) {
    rows.push_back({{"spec", spec_to_json(row.spec)},
                    {"a", row.a},
                    {"acc", row.acc},
                    {"ece", row.ece},
                    {"brier", row.brier}});
  }
  return {{"best_spec", spec_to_json(best_spec)},
          {"best_a", best_a},
          {"objective", objective},
          {"trace", rows}};
}

FitResult FitResult::from_json(const nlohmann::json& j) {
  try {
    FitResult r;
    r.best_spec = spec_from_json(j.at("best_spec"));
    r.best_a = j.at("best_a").get<double>();
    r.objective = j.at("objective").get<double>();
    for (const auto& row : j.at("trace")) {
      FitTraceRow t;
      t.spec = spec_from_json(row.at("spec"));
      t.a = row.at("a").get<double>();
      t.acc = row.at("acc").get<double>();
      t.ece = row.at("ece").get<double>();
      t.brier = row.at("brier").get<double>();
      r.trace.push_back(std::move(t));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("bad fit json: ") + e.what());
  }
}

namespace {

struct GridScore {
  double a = 0.0;
  double acc = 0.0;
  double ece = 0.0;
  double brier = 0.0;
};

std::vector<GridScore> score_grid(const std::vector<PaEstimate>& estimates,
                                  const std::vector<Label>& truth,
                                  int num_classes, ModelKind kind,
                                  const EmpiricalCdf* cdf,
                                  const std::vector<double>& a_grid) {
  if (estimates.size() != truth.size())
    throw IngestError("fit: estimates/truth size mismatch");
  if (estimates.empty()) throw IngestError("fit: empty validation split");
  if (a_grid.empty()) throw ConfigError("fit: empty a grid");
  if (kind == ModelKind::transfer && cdf == nullptr)
    throw ConfigError("fit: transfer model needs a reference cdf");
  std::vector<GridScore> rows;
  rows.reserve(a_grid.size());
  std::vector<ScoredPrediction> preds(estimates.size());
  for (double a : a_grid) {
    CalibrationModel model = (kind == ModelKind::gaussian)
                                 ? CalibrationModel::make_gaussian(a)
                                 : CalibrationModel::make_transfer(a, *cdf);
    for (std::size_t i = 0; i < estimates.size(); ++i) {
      preds[i].predicted = estimates[i].base_label;
      preds[i].truth = truth[i];
      preds[i].confidence = model.confidence(estimates[i].p_a_clipped);
    }
    GridScore row;
    row.a = a;
    row.acc = accuracy(preds);
    row.ece = ece(preds);
    row.brier = brier(preds, num_classes);
    rows.push_back(row);
  }
  return rows;
}

// Lowest ece wins; ties go to lower brier, then smaller a.
bool better(const GridScore& lhs, const GridScore& rhs) {
  if (lhs.ece != rhs.ece) return lhs.ece < rhs.ece;
  if (lhs.brier != rhs.brier) return lhs.brier < rhs.brier;
  return lhs.a < rhs.a;
}

}  // namespace

FitResult fit_a(const std::vector<PaEstimate>& estimates,
                const std::vector<Label>& truth, const TransformSpec& spec,
                int num_classes, ModelKind kind, const EmpiricalCdf* cdf,
                const std::vector<double>& a_grid) {
  auto rows = score_grid(estimates, truth, num_classes, kind, cdf, a_grid);
  FitResult result;
  result.best_spec = spec;
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (better(rows[i], rows[best])) best = i;
  result.best_a = rows[best].a;
  result.objective = rows[best].ece;
  for (const auto& row : rows)
    result.trace.push_back({spec, row.a, row.acc, row.ece, row.brier});
  return result;
}

FitResult fit_joint(Oracle& oracle, const std::vector<Image>& val_imgs,
                    const std::vector<Label>& val_truth,
                    const std::vector<TransformSpec>& specs, int s,
                    std::uint64_t run_seed, int num_classes, ModelKind kind,
                    const EmpiricalCdf* cdf,
                    const std::vector<double>& a_grid) {
  if (specs.empty()) throw ConfigError("fit: empty transform list");
  FitResult result;
  bool have_best = false;
  GridScore best_score;
  for (const auto& spec : specs) {
    auto estimates = estimate_dataset(oracle, val_imgs, spec, s, run_seed);
    auto rows = score_grid(estimates, val_truth, num_classes, kind, cdf,
                           a_grid);
    for (const auto& row : rows) {
      result.trace.push_back({spec, row.a, row.acc, row.ece, row.brier});
      if (!have_best || better(row, best_score)) {
        have_best = true;
        best_score = row;
        result.best_spec = spec;
      }
    }
  }
  result.best_a = best_score.a;
  result.objective = best_score.ece;
  return result;
}

std::vector<double> assign_confidences(const std::vector<PaEstimate>& estimates,
                                       const CalibrationModel& model) {
  std::vector<double> out;
  out.reserve(estimates.size());
  for (const auto& e : estimates) out.push_back(model.confidence(e.p_a_clipped));
  return out;
}

void write_estimates_csv(std::ostream& out,
                         const std::vector<PaEstimate>& estimates,
                         const std::vector<double>& confidences) {
  if (estimates.size() != confidences.size())
    throw IngestError("estimates csv: row count mismatch");
  out << "sample_id,base_label,matches,s,p_a_raw,p_a_clipped,confidence\n";
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    out << e.sample_id << ',' << e.base_label << ',' << e.matches << ','
        << e.s << ',' << format_double(e.p_a_raw) << ','
        << format_double(e.p_a_clipped) << ',' << format_double(confidences[i])
        << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

int parse_int(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw IngestError("estimates csv: bad integer at line " +
                      std::to_string(line_no));
  }
}

double parse_double(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw IngestError("estimates csv: bad number at line " +
                      std::to_string(line_no));
  }
}

}  // namespace

EstimateRows read_estimates_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw IngestError("estimates csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "sample_id,base_label,matches,s,p_a_raw,p_a_clipped,confidence")
    throw IngestError("estimates csv: unexpected header");
  EstimateRows rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 7)
      throw IngestError("estimates csv: expected 7 fields at line " +
                        std::to_string(line_no));
    PaEstimate e;
    e.sample_id = parse_int(fields[0], line_no);
    e.base_label = parse_int(fields[1], line_no);
    e.matches = parse_int(fields[2], line_no);
    e.s = parse_int(fields[3], line_no);
    e.p_a_raw = parse_double(fields[4], line_no);
    e.p_a_clipped = parse_double(fields[5], line_no);
    double conf = parse_double(fields[6], line_no);
    if (e.s < 0 || e.matches < 0 || (e.s > 0 && e.matches > e.s) ||
        (e.s == 0 && e.matches != 0))
      throw IngestError("estimates csv: inconsistent counts at line " +
                        std::to_string(line_no));
    if (!(e.p_a_raw >= 0.0 && e.p_a_raw <= 1.0) ||
        !(e.p_a_clipped >= 0.0 && e.p_a_clipped <= 1.0) ||
        !(conf >= 0.0 && conf <= 1.0))
      throw IngestError("estimates csv: value outside [0,1] at line " +
                        std::to_string(line_no));
    rows.estimates.push_back(e);
    rows.confidences.push_back(conf);
  }
  return rows;
}

}  // namespace qcal
