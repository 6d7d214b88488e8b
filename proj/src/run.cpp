#include "qcal/run.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "qcal/confidence.hpp"
#include "qcal/dataset.hpp"
#include "qcal/diagnostics.hpp"
#include "qcal/errors.hpp"
#include "qcal/estimation.hpp"
#include "qcal/format.hpp"
#include "qcal/http_oracle.hpp"
#include "qcal/metrics.hpp"
#include "qcal/rng.hpp"

namespace fs = std::filesystem;

namespace qcal {

namespace {

// ---------- config parsing ----------

long long checked_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer())
    throw ConfigError("config key '" + key + "' must be an integer");
  return v.get<long long>();
}

int small_int(const nlohmann::json& v, const std::string& key) {
  long long x = checked_int(v, key);
  if (x < -2147483648LL || x > 2147483647LL)
    throw ConfigError("config key '" + key + "' out of range");
  return static_cast<int>(x);
}

std::uint64_t seed_value(const nlohmann::json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  long long x = checked_int(v, key);
  if (x < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(x);
}

double checked_double(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number())
    throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

std::string checked_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string())
    throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "oracle") c.oracle = checked_string(value, key);
    else if (key == "model_seed") c.model_seed = seed_value(value, key);
    else if (key == "latent_dim") c.latent_dim = small_int(value, key);
    else if (key == "num_classes") c.num_classes = small_int(value, key);
    else if (key == "gain_bias") c.gain_bias = checked_double(value, key);
    else if (key == "gain_scale") c.gain_scale = checked_double(value, key);
    else if (key == "height") c.height = small_int(value, key);
    else if (key == "width") c.width = small_int(value, key);
    else if (key == "channels") c.channels = small_int(value, key);
    else if (key == "endpoint") c.endpoint = checked_string(value, key);
    else if (key == "max_in_flight") c.max_in_flight = small_int(value, key);
    else if (key == "timeout_ms") c.timeout_ms = small_int(value, key);
    else if (key == "max_retries") c.max_retries = small_int(value, key);
    else if (key == "playback_path") c.playback_path = checked_string(value, key);
    else if (key == "dataset") c.dataset = checked_string(value, key);
    else if (key == "transform") c.transform = checked_string(value, key);
    else if (key == "spec") {
      try {
        c.spec = spec_from_json(value);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("config key 'spec': ") + e.what());
      }
    } else if (key == "s") c.s = small_int(value, key);
    else if (key == "m") c.m = small_int(value, key);
    else if (key == "n") c.n = small_int(value, key);
    else if (key == "run_seed") c.run_seed = seed_value(value, key);
    else if (key == "out_dir") c.out_dir = checked_string(value, key);
    else if (key == "budget") {
      c.budget = checked_int(value, key);
      if (c.budget < 0) throw ConfigError("config key 'budget' must be >= 0");
    } else if (key == "cache") c.cache_path = checked_string(value, key);
    else if (key == "model_kind") c.model_kind = checked_string(value, key);
    else if (key == "a") c.a = checked_double(value, key);
    else if (key == "cdf_path") c.cdf_path = checked_string(value, key);
    else if (key == "fit_path") c.fit_path = checked_string(value, key);
    else if (key == "draws") c.draws = small_int(value, key);
    else if (key == "diag_images") c.diag_images = small_int(value, key);
    else if (key == "s_list") {
      if (!value.is_array())
        throw ConfigError("config key 's_list' must be an array of integers");
      c.s_list.clear();
      for (const auto& e : value) c.s_list.push_back(small_int(e, key));
    } else if (key == "runs") {
      if (!value.is_array())
        throw ConfigError("config key 'runs' must be an array of strings");
      c.runs.clear();
      for (const auto& e : value) c.runs.push_back(checked_string(e, key));
    } else if (key == "synth_count") c.synth_count = small_int(value, key);
    else if (key == "label_noise") c.label_noise = checked_double(value, key);
    else if (key == "format") c.format = checked_string(value, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

namespace {

// ---------- file helpers ----------

void atomic_write(const fs::path& path, const std::string& content) {
  fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  fs::path tmp =
      (dir.empty() ? fs::path(".") : dir) /
      ("." + path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot write: " + tmp.string());
    out << content;
    if (!out) throw IngestError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
  return j;
}

std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---------- oracle construction ----------

struct OracleBundle {
  std::unique_ptr<SyntheticModel> synthetic;
  std::unique_ptr<PlaybackOracle> playback;
  std::unique_ptr<HttpOracle> http;
  std::unique_ptr<QueryCache> cache;
  std::unique_ptr<CachedOracle> cached;

  Oracle& oracle() { return *cached; }
  SyntheticModel* white_box() { return synthetic.get(); }
};

Shape config_shape(const RunConfig& cfg) {
  return {cfg.height, cfg.width, cfg.channels};
}

void require_shape(const RunConfig& cfg) {
  if (cfg.height < 1 || cfg.width < 1 || cfg.channels < 1)
    throw ConfigError("height, width and channels must all be >= 1");
}

void require_classes(const RunConfig& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("num_classes must be >= 2");
}

SyntheticModel make_synthetic(const RunConfig& cfg) {
  require_shape(cfg);
  require_classes(cfg);
  if (cfg.latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  return SyntheticModel::random(config_shape(cfg), cfg.latent_dim,
                                cfg.num_classes, cfg.model_seed,
                                {cfg.gain_bias, cfg.gain_scale});
}

OracleBundle make_oracle(const RunConfig& cfg) {
  OracleBundle b;
  Oracle* inner = nullptr;
  if (cfg.oracle == "synthetic") {
    b.synthetic = std::make_unique<SyntheticModel>(make_synthetic(cfg));
    inner = b.synthetic.get();
  } else if (cfg.oracle == "playback") {
    if (cfg.playback_path.empty())
      throw ConfigError("playback oracle needs 'playback_path'");
    b.playback = std::make_unique<PlaybackOracle>(
        fs::path(cfg.playback_path), config_shape(cfg), cfg.num_classes);
    inner = b.playback.get();
  } else if (cfg.oracle == "http") {
    if (cfg.endpoint.empty()) throw ConfigError("http oracle needs 'endpoint'");
    HttpOracle::Options opt;
    opt.endpoint = cfg.endpoint;
    opt.timeout_ms = cfg.timeout_ms;
    opt.max_retries = cfg.max_retries;
    opt.max_in_flight = cfg.max_in_flight;
    opt.shape = config_shape(cfg);
    opt.num_classes = cfg.num_classes;
    b.http = std::make_unique<HttpOracle>(opt);
    inner = b.http.get();
  } else if (cfg.oracle.empty()) {
    throw ConfigError("config key 'oracle' is required");
  } else {
    throw ConfigError("unknown oracle kind '" + cfg.oracle + "'");
  }
  b.cache = cfg.cache_path.empty()
                ? std::make_unique<QueryCache>()
                : std::make_unique<QueryCache>(fs::path(cfg.cache_path));
  b.cached = std::make_unique<CachedOracle>(*inner, *b.cache);
  return b;
}

// ---------- shared pieces ----------

void check_budget(const RunConfig& cfg, long long planned) {
  if (cfg.budget >= 0 && planned > cfg.budget)
    throw BudgetError("planned " + std::to_string(planned) +
                      " queries exceed budget " + std::to_string(cfg.budget));
}

Dataset load_run_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("config key 'dataset' is required");
  require_classes(cfg);
  return load_dataset(cfg.dataset, cfg.num_classes);
}

void require_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("config key 'out_dir' is required");
}

ModelKind parse_kind(const RunConfig& cfg) {
  if (cfg.model_kind == "gaussian") return ModelKind::gaussian;
  if (cfg.model_kind == "transfer") return ModelKind::transfer;
  throw ConfigError("model_kind must be 'gaussian' or 'transfer'");
}

std::optional<EmpiricalCdf> load_cdf_if_transfer(const RunConfig& cfg,
                                                 ModelKind kind) {
  if (kind != ModelKind::transfer) return std::nullopt;
  if (cfg.cdf_path.empty())
    throw ConfigError("transfer model needs 'cdf_path'");
  return EmpiricalCdf::from_json(read_json_file(cfg.cdf_path));
}

// Exactly one of an explicit spec or a family grid.
std::vector<TransformSpec> resolve_specs(const RunConfig& cfg) {
  if (cfg.spec && !cfg.transform.empty())
    throw ConfigError("give either 'spec' or 'transform', not both");
  if (cfg.spec) {
    validate_spec(*cfg.spec);
    return {*cfg.spec};
  }
  if (!cfg.transform.empty()) return transform_grid(cfg.transform);
  throw ConfigError("need a 'spec' or a 'transform' family");
}

std::vector<ScoredPrediction> test_predictions(
    const std::vector<PaEstimate>& estimates,
    const std::vector<double>& confidences, const std::vector<Label>& labels,
    int from, int to) {
  std::vector<ScoredPrediction> preds;
  preds.reserve(static_cast<std::size_t>(to - from));
  for (int i = from; i < to; ++i) {
    ScoredPrediction p;
    p.predicted = estimates[static_cast<std::size_t>(i)].base_label;
    p.truth = labels[static_cast<std::size_t>(i)];
    p.confidence = confidences[static_cast<std::size_t>(i)];
    preds.push_back(p);
  }
  return preds;
}

MetricsReport build_report(const std::vector<ScoredPrediction>& preds,
                           int num_classes, int s,
                           const std::optional<TransformSpec>& spec,
                           std::optional<double> a) {
  MetricsReport r;
  r.acc = accuracy(preds);
  r.ece = qcal::ece(preds);
  r.auroc = qcal::auroc(preds);
  r.brier = qcal::brier(preds, num_classes);
  r.n = static_cast<int>(preds.size());
  r.s = s;
  r.spec = spec;
  r.a = a;
  return r;
}

// Comma-free one-liner for CSV cells.
std::string spec_label(const TransformSpec& spec) {
  struct V {
    std::string operator()(const GaussianSpec& g) const {
      return "gaussian(sigma=" + format_double(g.sigma) + ")";
    }
    std::string operator()(const RotationSpec& r) const {
      return "rotation(max_degrees=" + format_double(r.max_degrees) + ")";
    }
    std::string operator()(const AffineSpec& a) const {
      return "affine(max_degrees=" + format_double(a.max_degrees) +
             ";max_translate=" + format_double(a.max_translate) +
             ";max_scale_delta=" + format_double(a.max_scale_delta) + ")";
    }
    std::string operator()(const ElasticSpec& e) const {
      return "elastic(alpha=" + format_double(e.alpha) +
             ";sigma_e=" + format_double(e.sigma_e) + ")";
    }
  };
  return std::visit(V{}, spec);
}

struct EstimateSetup {
  std::optional<TransformSpec> spec;
  double a = 0.0;
  ModelKind kind = ModelKind::gaussian;
  std::optional<EmpiricalCdf> cdf;
};

EstimateSetup resolve_estimate_setup(const RunConfig& cfg) {
  EstimateSetup setup;
  setup.kind = parse_kind(cfg);
  if (!cfg.fit_path.empty()) {
    if (cfg.spec || cfg.a != 0.0)
      throw ConfigError("give either 'fit_path' or explicit 'spec'/'a'");
    FitResult fit = FitResult::from_json(read_json_file(cfg.fit_path));
    setup.spec = fit.best_spec;
    setup.a = fit.best_a;
  } else {
    setup.spec = cfg.spec;
    setup.a = cfg.a;
  }
  if (cfg.s > 0) {
    if (!setup.spec)
      throw ConfigError("estimate with s > 0 needs a 'spec' or 'fit_path'");
    validate_spec(*setup.spec);
    if (!(setup.a > 0.0))
      throw ConfigError("estimate with s > 0 needs 'a' > 0 or 'fit_path'");
    setup.cdf = load_cdf_if_transfer(cfg, setup.kind);
  }
  return setup;
}

}  // namespace

// ---------- commands ----------

nlohmann::json run_synth_data(const RunConfig& cfg) {
  if (cfg.oracle != "synthetic")
    throw ConfigError("synth-data needs oracle = synthetic");
  if (cfg.dataset.empty()) throw ConfigError("config key 'dataset' is required");
  if (cfg.synth_count < 1) throw ConfigError("synth_count must be >= 1");
  if (!(cfg.label_noise >= 0.0 && cfg.label_noise < 1.0))
    throw ConfigError("label_noise must lie in [0,1)");
  ImageFileFormat format;
  if (cfg.format == "raw") format = ImageFileFormat::raw;
  else if (cfg.format == "png") format = ImageFileFormat::png;
  else throw ConfigError("format must be 'raw' or 'png'");
  if (format == ImageFileFormat::png && cfg.channels != 3)
    throw ConfigError("png datasets need channels = 3");

  SyntheticModel model = make_synthetic(cfg);
  fs::path dir(cfg.dataset);
  if (fs::exists(dir))
    throw ConfigError("refusing to overwrite existing path: " + dir.string());

  Dataset data;
  data.num_classes = cfg.num_classes;
  long long elems = config_shape(cfg).count();
  for (int i = 0; i < cfg.synth_count; ++i) {
    Image img(cfg.height, cfg.width, cfg.channels);
    CounterRng pixels(SampleSeed{cfg.run_seed,
                                 static_cast<std::uint64_t>(i), 0}.key());
    for (long long e = 0; e < elems; ++e)
      img.data[static_cast<std::size_t>(e)] = static_cast<float>(
          pixels.uniform(static_cast<std::uint64_t>(e)));
    Label label = model.top1(img);
    CounterRng noise(SampleSeed{cfg.run_seed,
                                static_cast<std::uint64_t>(i), 1}.key());
    if (noise.uniform(0) < cfg.label_noise) {
      int other = static_cast<int>(noise.uniform(1) * (cfg.num_classes - 1));
      if (other >= cfg.num_classes - 1) other = cfg.num_classes - 2;
      if (other >= label) ++other;
      label = other;
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }

  // Build in a temp dir, then rename into place so a crash leaves nothing.
  fs::path parent = dir.parent_path().empty() ? fs::path(".")
                                              : dir.parent_path();
  fs::create_directories(parent);
  fs::path tmp = parent / ("." + dir.filename().string() + ".tmp");
  fs::remove_all(tmp);
  save_dataset(tmp, data, format);
  fs::rename(tmp, dir);

  return {{"command", "synth_data"},
          {"dataset", cfg.dataset},
          {"count", cfg.synth_count},
          {"format", cfg.format}};
}

nlohmann::json run_estimate(const RunConfig& cfg) {
  require_out_dir(cfg);
  if (cfg.s < 0) throw ConfigError("s must be >= 0");
  if (cfg.m < 0) throw ConfigError("m must be >= 0");
  if (cfg.n < 1) throw ConfigError("n must be >= 1");
  EstimateSetup setup = resolve_estimate_setup(cfg);

  Dataset data = load_run_dataset(cfg);
  int total = cfg.m + cfg.n;
  if (total > static_cast<int>(data.images.size()))
    throw ConfigError("m + n exceeds dataset size");
  long long planned = 1LL * total * (cfg.s + 1);
  check_budget(cfg, planned);

  OracleBundle bundle = make_oracle(cfg);
  std::vector<Image> imgs(data.images.begin(), data.images.begin() + total);
  TransformSpec spec = setup.spec ? *setup.spec : TransformSpec(GaussianSpec{0.0});
  auto estimates =
      estimate_dataset(bundle.oracle(), imgs, spec, cfg.s, cfg.run_seed);

  std::vector<double> confidences;
  if (cfg.s == 0) {
    // Naive baseline: the lone top-1 answer is trusted outright.
    confidences.assign(estimates.size(), 1.0);
  } else {
    CalibrationModel model =
        (setup.kind == ModelKind::gaussian)
            ? CalibrationModel::make_gaussian(setup.a)
            : CalibrationModel::make_transfer(setup.a, *setup.cdf);
    confidences = assign_confidences(estimates, model);
  }

  auto preds = test_predictions(estimates, confidences, data.labels, cfg.m,
                                total);
  MetricsReport report = build_report(
      preds, cfg.num_classes, cfg.s, setup.spec,
      cfg.s == 0 ? std::nullopt : std::optional<double>(setup.a));
  ReliabilityBins bins = ReliabilityBins::build(preds);

  fs::path out(cfg.out_dir);
  std::ostringstream est_csv;
  write_estimates_csv(est_csv, estimates, confidences);
  atomic_write(out / "estimates.csv", est_csv.str());
  atomic_write(out / "metrics.json", json_text(report.to_json()));
  std::ostringstream rel_csv;
  bins.write_csv(rel_csv);
  atomic_write(out / "reliability.csv", rel_csv.str());

  return {{"command", "estimate"},
          {"out_dir", cfg.out_dir},
          {"queries", bundle.cached->calls()},
          {"remote_calls", bundle.cached->misses()},
          {"acc", report.acc},
          {"ece", report.ece},
          {"brier", report.brier},
          {"auroc", report.auroc},
          {"n", report.n},
          {"s", report.s}};
}

nlohmann::json run_fit(const RunConfig& cfg) {
  require_out_dir(cfg);
  if (cfg.s < 1) throw ConfigError("fit needs s >= 1");
  if (cfg.m < 1) throw ConfigError("fit needs m >= 1");
  auto specs = resolve_specs(cfg);
  ModelKind kind = parse_kind(cfg);
  auto cdf = load_cdf_if_transfer(cfg, kind);

  Dataset data = load_run_dataset(cfg);
  if (cfg.m > static_cast<int>(data.images.size()))
    throw ConfigError("m exceeds dataset size");
  long long planned =
      1LL * cfg.m * (cfg.s + 1) * static_cast<long long>(specs.size());
  check_budget(cfg, planned);

  OracleBundle bundle = make_oracle(cfg);
  std::vector<Image> val_imgs(data.images.begin(),
                              data.images.begin() + cfg.m);
  std::vector<Label> val_truth(data.labels.begin(),
                               data.labels.begin() + cfg.m);
  FitResult fit = fit_joint(bundle.oracle(), val_imgs, val_truth, specs,
                            cfg.s, cfg.run_seed, cfg.num_classes, kind,
                            cdf ? &*cdf : nullptr);

  atomic_write(fs::path(cfg.out_dir) / "fit.json", json_text(fit.to_json()));

  return {{"command", "fit"},
          {"out_dir", cfg.out_dir},
          {"queries", bundle.cached->calls()},
          {"remote_calls", bundle.cached->misses()},
          {"best_a", fit.best_a},
          {"best_spec", spec_to_json(fit.best_spec)},
          {"objective", fit.objective},
          {"trace_rows", fit.trace.size()}};
}

namespace {

// Shared by diagnose and transfer-fit: margin shifts on the dataset head.
std::vector<std::vector<double>> collect_shifts(const RunConfig& cfg,
                                                SyntheticModel& model,
                                                const TransformSpec& spec) {
  Dataset data = load_run_dataset(cfg);
  if (cfg.diag_images < 1) throw ConfigError("diag_images must be >= 1");
  if (cfg.draws < 2) throw ConfigError("draws must be >= 2");
  if (cfg.diag_images > static_cast<int>(data.images.size()))
    throw ConfigError("diag_images exceeds dataset size");
  std::vector<Image> imgs(data.images.begin(),
                          data.images.begin() + cfg.diag_images);
  return margin_shift_draws(model, imgs, spec, cfg.draws, cfg.run_seed);
}

SyntheticModel require_white_box(const RunConfig& cfg) {
  if (cfg.oracle != "synthetic")
    throw CapabilityError("latent diagnostics need a white-box oracle");
  return make_synthetic(cfg);
}

}  // namespace

nlohmann::json run_diagnose(const RunConfig& cfg) {
  require_out_dir(cfg);
  if (!cfg.spec) throw ConfigError("diagnose needs an explicit 'spec'");
  validate_spec(*cfg.spec);
  SyntheticModel model = require_white_box(cfg);
  auto shifts = collect_shifts(cfg, model, *cfg.spec);

  CdfEnsemble ens = CdfEnsemble::build(shifts);
  double var = ens.var_stat();
  KsFit ks = ks_against_normal(ens);

  nlohmann::json stats = {{"var_stat", var},
                          {"ks_stat", ks.ks},
                          {"best_fit_a", ks.a},
                          {"images", cfg.diag_images},
                          {"draws", cfg.draws},
                          {"spec", spec_to_json(*cfg.spec)}};
  fs::path out(cfg.out_dir);
  atomic_write(out / "diagnostics.json", json_text(stats));
  std::ostringstream csv;
  ens.write_csv(csv, ks.a);
  atomic_write(out / "ensemble.csv", csv.str());

  return {{"command", "diagnose"},
          {"out_dir", cfg.out_dir},
          {"var_stat", var},
          {"ks_stat", ks.ks},
          {"best_fit_a", ks.a}};
}

nlohmann::json run_transfer_fit(const RunConfig& cfg) {
  require_out_dir(cfg);
  if (!cfg.spec) throw ConfigError("transfer-fit needs an explicit 'spec'");
  validate_spec(*cfg.spec);
  SyntheticModel model = require_white_box(cfg);
  auto shifts = collect_shifts(cfg, model, *cfg.spec);

  EmpiricalCdf cdf = learn_transfer_cdf(shifts);
  atomic_write(fs::path(cfg.out_dir) / "cdf.json", json_text(cdf.to_json()));

  return {{"command", "transfer_fit"},
          {"out_dir", cfg.out_dir},
          {"points", cdf.size()}};
}

nlohmann::json run_sweep(const RunConfig& cfg) {
  require_out_dir(cfg);
  if (cfg.s_list.empty()) throw ConfigError("sweep needs a nonempty 's_list'");
  for (int s : cfg.s_list)
    if (s < 1) throw ConfigError("sweep s values must be >= 1");
  if (cfg.m < 1) throw ConfigError("sweep needs m >= 1");
  if (cfg.n < 1) throw ConfigError("sweep needs n >= 1");
  auto specs = resolve_specs(cfg);
  ModelKind kind = parse_kind(cfg);
  auto cdf = load_cdf_if_transfer(cfg, kind);

  Dataset data = load_run_dataset(cfg);
  int total = cfg.m + cfg.n;
  if (total > static_cast<int>(data.images.size()))
    throw ConfigError("m + n exceeds dataset size");
  long long planned = 0;
  for (int s : cfg.s_list)
    planned += 1LL * cfg.m * (s + 1) * static_cast<long long>(specs.size()) +
               1LL * cfg.n * (s + 1);
  check_budget(cfg, planned);

  OracleBundle bundle = make_oracle(cfg);
  std::vector<Image> val_imgs(data.images.begin(),
                              data.images.begin() + cfg.m);
  std::vector<Label> val_truth(data.labels.begin(),
                               data.labels.begin() + cfg.m);
  std::vector<Image> test_imgs(data.images.begin() + cfg.m,
                               data.images.begin() + total);

  std::ostringstream csv;
  csv << "s,acc,ece,brier,auroc,best_a,spec\n";
  nlohmann::json rows = nlohmann::json::array();
  for (int s : cfg.s_list) {
    FitResult fit = fit_joint(bundle.oracle(), val_imgs, val_truth, specs, s,
                              cfg.run_seed, cfg.num_classes, kind,
                              cdf ? &*cdf : nullptr);
    auto estimates =
        estimate_dataset(bundle.oracle(), test_imgs, fit.best_spec, s,
                         cfg.run_seed, static_cast<std::uint64_t>(cfg.m));
    CalibrationModel model =
        (kind == ModelKind::gaussian)
            ? CalibrationModel::make_gaussian(fit.best_a)
            : CalibrationModel::make_transfer(fit.best_a, *cdf);
    auto confidences = assign_confidences(estimates, model);
    std::vector<ScoredPrediction> preds;
    preds.reserve(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
      ScoredPrediction p;
      p.predicted = estimates[static_cast<std::size_t>(i)].base_label;
      p.truth = data.labels[static_cast<std::size_t>(cfg.m + i)];
      p.confidence = confidences[static_cast<std::size_t>(i)];
      preds.push_back(p);
    }
    MetricsReport rep = build_report(preds, cfg.num_classes, s,
                                     fit.best_spec, fit.best_a);
    csv << s << ',' << format_double(rep.acc) << ',' << format_double(rep.ece)
        << ',' << format_double(rep.brier) << ',' << format_double(rep.auroc)
        << ',' << format_double(fit.best_a) << ',' << spec_label(fit.best_spec)
        << '\n';
    rows.push_back({{"s", s},
                    {"acc", rep.acc},
                    {"ece", rep.ece},
                    {"brier", rep.brier},
                    {"auroc", rep.auroc},
                    {"best_a", fit.best_a},
                    {"spec", spec_to_json(fit.best_spec)}});
  }

  atomic_write(fs::path(cfg.out_dir) / "sweep.csv", csv.str());

  return {{"command", "sweep"},
          {"out_dir", cfg.out_dir},
          {"queries", bundle.cached->calls()},
          {"remote_calls", bundle.cached->misses()},
          {"rows", rows}};
}

nlohmann::json run_report(const RunConfig& cfg) {
  require_out_dir(cfg);
  if (cfg.runs.empty()) throw ConfigError("report needs a nonempty 'runs'");

  struct Row {
    std::string run;
    MetricsReport metrics;
  };
  std::vector<Row> rows;
  for (const auto& run : cfg.runs) {
    fs::path dir(run);
    Row row;
    row.run = run;
    row.metrics = MetricsReport::from_json(read_json_file(dir / "metrics.json"));
    fs::path diag = dir / "diagnostics.json";
    if (fs::exists(diag)) {
      nlohmann::json j = read_json_file(diag);
      try {
        row.metrics.var_stat = j.at("var_stat").get<double>();
        row.metrics.ks_stat = j.at("ks_stat").get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw IngestError(diag.string() + ": " + e.what());
      }
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "run,acc,ece,auroc,brier,var,ks,n,s,a,spec\n";
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    csv << row.run << ',' << format_double(m.acc) << ',' << format_double(m.ece)
        << ',' << format_double(m.auroc) << ',' << format_double(m.brier)
        << ',' << (m.var_stat ? format_double(*m.var_stat) : "nan") << ','
        << (m.ks_stat ? format_double(*m.ks_stat) : "nan") << ',' << m.n << ','
        << m.s << ',' << (m.a ? format_double(*m.a) : "nan") << ','
        << (m.spec ? spec_label(*m.spec) : "none") << '\n';
  }

  // Correlates the white-box statistics with the black-box quality metrics
  // across runs that carry both.
  std::vector<const MetricsReport*> full;
  for (const auto& row : rows)
    if (row.metrics.var_stat && row.metrics.ks_stat)
      full.push_back(&row.metrics);

  int correlated = 0;
  std::string corr_csv;
  if (full.size() >= 3) {
    auto column = [&](auto get) {
      std::vector<double> v;
      for (const auto* m : full) v.push_back(get(*m));
      return v;
    };
    std::vector<std::pair<std::string, std::vector<double>>> xs = {
        {"var", column([](const MetricsReport& m) { return *m.var_stat; })},
        {"ks", column([](const MetricsReport& m) { return *m.ks_stat; })}};
    std::vector<std::pair<std::string, std::vector<double>>> ys = {
        {"ece", column([](const MetricsReport& m) { return m.ece; })},
        {"auroc", column([](const MetricsReport& m) { return m.auroc; })},
        {"brier", column([](const MetricsReport& m) { return m.brier; })}};
    std::ostringstream corr;
    corr << "x,y,r,p\n";
    for (const auto& [xname, xv] : xs)
      for (const auto& [yname, yv] : ys) {
        double r = std::nan(""), p = std::nan("");
        try {
          PearsonResult res = pearson_r(xv, yv);
          r = res.r;
          p = res.p;
        } catch (const MetricError&) {
          // Degenerate column (zero variance); leave the row as nan.
        }
        corr << xname << ',' << yname << ',' << format_double(r) << ','
             << format_double(p) << '\n';
      }
    corr_csv = corr.str();
    correlated = static_cast<int>(full.size());
  }

  fs::path out(cfg.out_dir);
  atomic_write(out / "report.csv", csv.str());
  if (!corr_csv.empty()) atomic_write(out / "correlations.csv", corr_csv);

  return {{"command", "report"},
          {"out_dir", cfg.out_dir},
          {"runs", rows.size()},
          {"correlated", correlated}};
}

}  // namespace qcal
