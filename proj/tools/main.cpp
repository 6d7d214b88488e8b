// Command-line front end: subcommand dispatch, config/flag merging, and
// exit-code mapping. All real work lives in the library's run layer.

#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcal/errors.hpp"
#include "qcal/run.hpp"

namespace {

using nlohmann::json;

struct Cli {
  CLI::App app{"Calibrated confidence for closed-source top-1 classifiers"};
  std::string config_path;
  json overrides = json::object();

  void add_string(const char* flag, const char* key, const char* desc) {
    app.add_option_function<std::string>(
        flag, [this, key](const std::string& v) { overrides[key] = v; }, desc);
  }
  void add_int(const char* flag, const char* key, const char* desc) {
    app.add_option_function<long long>(
        flag, [this, key](const long long& v) { overrides[key] = v; }, desc);
  }
  void add_double(const char* flag, const char* key, const char* desc) {
    app.add_option_function<double>(
        flag, [this, key](const double& v) { overrides[key] = v; }, desc);
  }
};

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  cli.app.require_subcommand(1);
  cli.app.add_option("--config", cli.config_path,
                     "JSON config file; flags override its keys");

  cli.add_string("--oracle", "oracle", "synthetic | http | playback");
  cli.add_int("--model-seed", "model_seed", "synthetic model parameter seed");
  cli.add_int("--latent-dim", "latent_dim", "synthetic latent dimension");
  cli.add_int("--num-classes", "num_classes", "number of classes");
  cli.add_double("--gain-bias", "gain_bias", "synthetic gain bias");
  cli.add_double("--gain-scale", "gain_scale", "synthetic gain scale");
  cli.add_int("--height", "height", "image height");
  cli.add_int("--width", "width", "image width");
  cli.add_int("--channels", "channels", "image channels");
  cli.add_string("--endpoint", "endpoint", "http oracle base URL");
  cli.add_int("--max-in-flight", "max_in_flight", "http concurrency bound");
  cli.add_int("--timeout-ms", "timeout_ms", "http timeout");
  cli.add_int("--max-retries", "max_retries", "http retry count");
  cli.add_string("--playback-path", "playback_path", "playback log file");
  cli.add_string("--dataset", "dataset", "dataset directory");
  cli.add_string("--transform", "transform",
                 "transform family: gaussian | rotation | affine | elastic");
  cli.app.add_option_function<std::string>(
      "--spec",
      [&cli](const std::string& v) {
        try {
          cli.overrides["spec"] = json::parse(v);
        } catch (const json::exception& e) {
          throw CLI::ValidationError("--spec", e.what());
        }
      },
      "explicit transform spec as JSON");
  cli.add_int("--s", "s", "transformed queries per sample");
  cli.add_int("--m", "m", "validation rows (head of dataset)");
  cli.add_int("--n", "n", "test rows (after the validation rows)");
  cli.add_int("--run-seed", "run_seed", "seed for all run randomness");
  cli.add_string("--out-dir", "out_dir", "output directory");
  cli.add_int("--budget", "budget", "max planned queries");
  cli.add_string("--cache", "cache", "persistent query-cache file");
  cli.add_string("--model-kind", "model_kind", "gaussian | transfer");
  cli.add_double("--a", "a", "confidence scale for estimate");
  cli.add_string("--cdf-path", "cdf_path", "learned noise CDF (transfer)");
  cli.add_string("--fit-path", "fit_path", "fit.json feeding estimate");
  cli.add_int("--draws", "draws", "diagnostic draws per image");
  cli.add_int("--diag-images", "diag_images", "diagnostic image count");
  cli.app.add_option_function<std::vector<long long>>(
      "--s-list",
      [&cli](const std::vector<long long>& v) {
        cli.overrides["s_list"] = v;
      },
      "comma-separated S values for sweep")
      ->delimiter(',');
  cli.app.add_option_function<std::vector<std::string>>(
      "--runs",
      [&cli](const std::vector<std::string>& v) { cli.overrides["runs"] = v; },
      "run directories for report");
  cli.add_int("--synth-count", "synth_count", "samples to generate");
  cli.add_double("--label-noise", "label_noise",
                 "fraction of labels flipped to a random other class");
  cli.add_string("--format", "format", "synthetic dataset files: raw | png");

  std::vector<std::pair<std::string,
                        std::function<nlohmann::json(const qcal::RunConfig&)>>>
      commands = {{"synth-data", qcal::run_synth_data},
                  {"estimate", qcal::run_estimate},
                  {"fit", qcal::run_fit},
                  {"diagnose", qcal::run_diagnose},
                  {"transfer-fit", qcal::run_transfer_fit},
                  {"sweep", qcal::run_sweep},
                  {"report", qcal::run_report}};
  for (const auto& c : commands) cli.app.add_subcommand(c.first)->fallthrough();

  try {
    cli.app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.app.exit(e);
  }

  try {
    json merged = json::object();
    if (!cli.config_path.empty()) {
      std::ifstream in(cli.config_path);
      if (!in)
        throw qcal::ConfigError("cannot read config file: " + cli.config_path);
      try {
        in >> merged;
      } catch (const json::exception& e) {
        throw qcal::ConfigError("config file " + cli.config_path + ": " +
                                e.what());
      }
      if (!merged.is_object())
        throw qcal::ConfigError("config must be a JSON object");
    }
    for (const auto& [key, value] : cli.overrides.items()) merged[key] = value;
    qcal::RunConfig cfg = qcal::RunConfig::from_json(merged);

    for (auto& [name, fn] : commands) {
      if (cli.app.got_subcommand(name)) {
        std::cout << fn(cfg).dump() << "\n";
        return 0;
      }
    }
    std::cerr << "error: no command\n";
    return 2;
  } catch (const qcal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const qcal::IngestError& e) {
    std::cerr << "ingest error: " << e.what() << "\n";
    return 3;
  } catch (const qcal::BudgetError& e) {
    std::cerr << "budget error: " << e.what() << "\n";
    return 5;
  } catch (const qcal::OracleError& e) {
    std::cerr << "oracle error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
