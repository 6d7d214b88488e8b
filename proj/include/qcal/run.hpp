#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcal/transforms.hpp"

namespace qcal {

// Flat configuration shared by every command. Each command validates the
// keys it needs; unknown keys are rejected at parse time so typos fail fast.
struct RunConfig {
  // Oracle selection: "synthetic", "http" or "playback".
  std::string oracle;
  std::uint64_t model_seed = 1;
  int latent_dim = 16;
  int num_classes = 0;
  double gain_bias = 1.0;
  double gain_scale = 0.0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::string endpoint;
  int max_in_flight = 8;
  int timeout_ms = 5000;
  int max_retries = 3;
  std::string playback_path;

  // Pipeline.
  std::string dataset;
  std::string transform;                     // family name for grid search
  std::optional<TransformSpec> spec;         // explicit single transform
  int s = 0;                                 // transformed queries per sample
  int m = 0;                                 // validation rows (dataset head)
  int n = 0;                                 // test rows (following m)
  std::uint64_t run_seed = 0;
  std::string out_dir;
  long long budget = -1;                     // max planned queries; -1 = off
  std::string cache_path;                    // persistent query cache
  std::string model_kind = "gaussian";       // or "transfer"
  double a = 0.0;                            // fixed scale for estimate
  std::string cdf_path;                      // learned noise CDF (transfer)
  std::string fit_path;                      // fit result feeding estimate

  // Diagnostics.
  int draws = 1000;
  int diag_images = 100;

  // Sweep and report.
  std::vector<int> s_list;
  std::vector<std::string> runs;

  // Synthetic data generation.
  int synth_count = 0;
  double label_noise = 0.0;
  std::string format = "raw";  // "raw" or "png"

  // Rejects unknown keys and wrong types with ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

// Each command returns the one-line JSON summary the CLI prints on stdout.
// Output files are written atomically (temp file + rename) after the whole
// computation succeeds, so failures never leave partial outputs behind.
nlohmann::json run_synth_data(const RunConfig& cfg);
nlohmann::json run_estimate(const RunConfig& cfg);
nlohmann::json run_fit(const RunConfig& cfg);
nlohmann::json run_diagnose(const RunConfig& cfg);
nlohmann::json run_transfer_fit(const RunConfig& cfg);
nlohmann::json run_sweep(const RunConfig& cfg);
nlohmann::json run_report(const RunConfig& cfg);

}  // namespace qcal
