#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <doctest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;

  json summary() const {
    // a successful command prints exactly one JSON line
    auto first_nl = out.find('\n');
    REQUIRE(first_nl != std::string::npos);
    REQUIRE(first_nl == out.size() - 1);
    return json::parse(out);
  }
};

CliResult run_cli(const std::string& args) {
  CliResult result;
  std::string cmd = std::string(QCAL_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (size_t got = fread(buf, 1, sizeof buf, pipe)) {
    result.out.append(buf, got);
    if (got < sizeof buf) break;
  }
  int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("qcal_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A small shared workspace: synthetic dataset plus common flags.
struct Workspace {
  fs::path dir;
  std::string oracle;  // oracle flags only, for tests that redirect --dataset
  std::string base;

  explicit Workspace(const std::string& tag) : dir(temp_dir(tag)) {
    oracle = " --oracle synthetic --model-seed 3 --height 6 --width 6"
             " --channels 1 --num-classes 4 --latent-dim 8";
    base = oracle + " --dataset " + (dir / "data").string();
    auto gen = run_cli("synth-data" + base +
                       " --synth-count 24 --label-noise 0.2 --run-seed 5");
    REQUIRE(gen.exit_code == 0);
  }
  std::string path(const std::string& name) const {
    return (dir / name).string();
  }
};

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  return lines;
}

bool has_dot_tmp_files(const fs::path& dir) {
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.path().filename().string().rfind('.', 0) == 0) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("cli pipeline: estimate, fit, diagnose, transfer, sweep, report") {
  Workspace ws("pipeline");

  // --- estimate with an explicit spec and scale
  auto est = run_cli("estimate" + ws.base +
                     " --m 6 --n 12 --s 5 --spec"
                     " '{\"kind\":\"gaussian\",\"sigma\":0.1}' --a 0.7"
                     " --run-seed 11 --out-dir " + ws.path("est") +
                     " --cache " + ws.path("cache.jsonl"));
  REQUIRE(est.exit_code == 0);
  auto s1 = est.summary();
  CHECK(s1.at("command") == "estimate");
  CHECK(s1.at("queries") == 18 * 6);  // (m + n) * (s + 1)
  CHECK(s1.at("remote_calls") == 18 * 6);
  CHECK(s1.at("n") == 12);
  CHECK(fs::exists(ws.path("est") + "/estimates.csv"));
  CHECK(fs::exists(ws.path("est") + "/metrics.json"));
  CHECK(fs::exists(ws.path("est") + "/reliability.csv"));
  CHECK(count_lines(ws.path("est") + "/estimates.csv") == 1 + 18);
  CHECK(count_lines(ws.path("est") + "/reliability.csv") == 1 + 15);
  CHECK(!has_dot_tmp_files(ws.dir));

  // metrics.json matches the stdout summary
  std::ifstream mf(ws.path("est") + "/metrics.json");
  json metrics;
  mf >> metrics;
  CHECK(metrics.at("acc") == s1.at("acc"));
  CHECK(metrics.at("ece") == s1.at("ece"));
  CHECK(metrics.at("n") == 12);
  CHECK(metrics.at("s") == 5);
  CHECK(metrics.at("a") == 0.7);

  // --- warm replay: zero remote calls, byte-identical outputs
  auto warm = run_cli("estimate" + ws.base +
                      " --m 6 --n 12 --s 5 --spec"
                      " '{\"kind\":\"gaussian\",\"sigma\":0.1}' --a 0.7"
                      " --run-seed 11 --out-dir " + ws.path("est2") +
                      " --cache " + ws.path("cache.jsonl"));
  REQUIRE(warm.exit_code == 0);
  CHECK(warm.summary().at("remote_calls") == 0);
  auto read_file = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(read_file(ws.path("est") + "/estimates.csv") ==
        read_file(ws.path("est2") + "/estimates.csv"));
  CHECK(read_file(ws.path("est") + "/metrics.json") ==
        read_file(ws.path("est2") + "/metrics.json"));

  // --- fit over the gaussian family, then estimate from fit.json
  auto fit = run_cli("fit" + ws.base +
                     " --m 6 --s 5 --transform gaussian --run-seed 11"
                     " --out-dir " + ws.path("fit") +
                     " --cache " + ws.path("cache.jsonl"));
  REQUIRE(fit.exit_code == 0);
  CHECK(fit.summary().at("trace_rows") == 8 * 9);  // specs x a grid
  CHECK(fs::exists(ws.path("fit") + "/fit.json"));

  auto est_fit = run_cli("estimate" + ws.base +
                         " --m 6 --n 12 --s 5 --fit-path " +
                         ws.path("fit") + "/fit.json --run-seed 11"
                         " --out-dir " + ws.path("est_fit") +
                         " --cache " + ws.path("cache.jsonl"));
  REQUIRE(est_fit.exit_code == 0);

  // --- diagnose (white-box path)
  auto diag = run_cli("diagnose" + ws.base +
                      " --spec '{\"kind\":\"gaussian\",\"sigma\":0.1}'"
                      " --diag-images 6 --draws 60 --run-seed 11"
                      " --out-dir " + ws.path("est"));
  REQUIRE(diag.exit_code == 0);
  auto d = diag.summary();
  CHECK(d.contains("var_stat"));
  CHECK(d.contains("ks_stat"));
  CHECK(fs::exists(ws.path("est") + "/diagnostics.json"));
  CHECK(count_lines(ws.path("est") + "/ensemble.csv") == 1 + 512);

  // --- transfer-fit, then a transfer-calibrated estimate
  auto tf = run_cli("transfer-fit" + ws.base +
                    " --spec '{\"kind\":\"gaussian\",\"sigma\":0.1}'"
                    " --diag-images 6 --draws 60 --run-seed 11"
                    " --out-dir " + ws.path("tf"));
  REQUIRE(tf.exit_code == 0);
  CHECK(tf.summary().at("points") == 360);
  auto est_tf = run_cli("estimate" + ws.base +
                        " --m 6 --n 12 --s 5 --spec"
                        " '{\"kind\":\"gaussian\",\"sigma\":0.1}' --a 0.7"
                        " --model-kind transfer --cdf-path " +
                        ws.path("tf") + "/cdf.json --run-seed 11"
                        " --out-dir " + ws.path("est_tf") +
                        " --cache " + ws.path("cache.jsonl"));
  REQUIRE(est_tf.exit_code == 0);
  CHECK(est_tf.summary().at("remote_calls") == 0);  // same queries as before

  // --- sweep across S values
  auto sweep = run_cli("sweep" + ws.base +
                       " --m 6 --n 12 --s-list 2,5 --transform gaussian"
                       " --run-seed 11 --out-dir " + ws.path("sweep") +
                       " --cache " + ws.path("cache.jsonl"));
  REQUIRE(sweep.exit_code == 0);
  CHECK(sweep.summary().at("rows").size() == 2);
  CHECK(count_lines(ws.path("sweep") + "/sweep.csv") == 1 + 2);

  // --- report over both estimate runs
  auto rep = run_cli("report --runs " + ws.path("est") + " --runs " +
                     ws.path("est2") + " --out-dir " + ws.path("rep"));
  REQUIRE(rep.exit_code == 0);
  CHECK(rep.summary().at("runs") == 2);
  CHECK(count_lines(ws.path("rep") + "/report.csv") == 1 + 2);

  CHECK(!has_dot_tmp_files(ws.dir));
}

TEST_CASE("cli flags override config file keys") {
  Workspace ws("config");
  {
    std::ofstream out(ws.dir / "config.json");
    json cfg{{"oracle", "synthetic"}, {"model_seed", 3},  {"height", 6},
             {"width", 6},            {"channels", 1},    {"num_classes", 4},
             {"latent_dim", 8},       {"dataset", (ws.dir / "data").string()},
             {"m", 2},                {"n", 4},           {"s", 2},
             {"a", 0.7},              {"run_seed", 11},
             {"spec", {{"kind", "gaussian"}, {"sigma", 0.1}}},
             {"out_dir", (ws.dir / "out").string()}};
    out << cfg.dump(2);
  }
  auto res = run_cli("estimate --config " + (ws.dir / "config.json").string() +
                     " --n 6");
  REQUIRE(res.exit_code == 0);
  auto s = res.summary();
  CHECK(s.at("n") == 6);                 // flag wins
  CHECK(s.at("queries") == (2 + 6) * 3);  // m from config, n from flag
}

TEST_CASE("cli rejects unknown config keys") {
  Workspace ws("badkey");
  {
    std::ofstream out(ws.dir / "config.json");
    out << "{\"oracle\": \"synthetic\", \"mystery\": 1}";
  }
  auto res = run_cli("estimate --config " + (ws.dir / "config.json").string());
  CHECK(res.exit_code == 2);

  auto missing = run_cli("estimate --config " + ws.path("absent.json"));
  CHECK(missing.exit_code == 2);
}

TEST_CASE("cli maps error classes to exit codes") {
  Workspace ws("codes");

  // ingest failure: dataset directory does not exist
  auto ingest = run_cli("estimate" + ws.oracle +
                        " --dataset " + ws.path("nope") +
                        " --m 2 --n 4 --s 0 --run-seed 1 --out-dir " +
                        ws.path("o1"));
  CHECK(ingest.exit_code == 3);

  // config failure: s > 0 without a spec or fit
  auto conf = run_cli("estimate" + ws.base +
                      " --m 2 --n 4 --s 3 --run-seed 1 --out-dir " +
                      ws.path("o2"));
  CHECK(conf.exit_code == 2);

  // config failure: no oracle at all
  auto noora = run_cli("estimate --dataset " + (ws.dir / "data").string() +
                       " --m 2 --n 4 --s 0 --out-dir " + ws.path("o3"));
  CHECK(noora.exit_code == 2);

  // oracle failure: playback log with no matching entries
  {
    std::ofstream out(ws.dir / "empty.jsonl");
    out << "{\"hash\": \"00\", \"label\": 0}\n";
  }
  auto oracle = run_cli("estimate --oracle playback --playback-path " +
                        ws.path("empty.jsonl") + " --dataset " +
                        (ws.dir / "data").string() +
                        " --num-classes 4 --m 2 --n 4 --s 0 --run-seed 1"
                        " --out-dir " + ws.path("o4"));
  CHECK(oracle.exit_code == 4);

  // budget failure: planned queries exceed the cap, and nothing runs
  auto budget = run_cli("estimate" + ws.base +
                        " --m 6 --n 12 --s 5 --spec"
                        " '{\"kind\":\"gaussian\",\"sigma\":0.1}' --a 0.7"
                        " --run-seed 1 --budget 10 --out-dir " +
                        ws.path("o5"));
  CHECK(budget.exit_code == 5);
  CHECK(!fs::exists(ws.path("o5") + "/metrics.json"));
  CHECK(!fs::exists(ws.path("o5") + "/estimates.csv"));
}

TEST_CASE("cli budget admits runs that exactly fit") {
  Workspace ws("budgetok");
  auto ok = run_cli("estimate" + ws.base +
                    " --m 2 --n 4 --s 2 --spec"
                    " '{\"kind\":\"gaussian\",\"sigma\":0.1}' --a 0.7"
                    " --run-seed 1 --budget 18 --out-dir " + ws.path("ok"));
  CHECK(ok.exit_code == 0);
  CHECK(ok.summary().at("queries") == 18);
}

TEST_CASE("naive estimate trusts the lone answer") {
  Workspace ws("naive");
  auto res = run_cli("estimate" + ws.base +
                     " --m 0 --n 12 --s 0 --run-seed 2 --out-dir " +
                     ws.path("naive"));
  REQUIRE(res.exit_code == 0);
  auto s = res.summary();
  CHECK(s.at("queries") == 12);  // one per sample

  // every confidence is 1; the calibration identities follow exactly
  std::ifstream in(ws.path("naive") + "/estimates.csv");
  std::string line;
  std::getline(in, line);  // header
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.substr(line.size() - 2) == ",1");
  }
  CHECK(rows == 12);
  double acc = s.at("acc").get<double>();
  CHECK(s.at("ece").get<double>() == doctest::Approx(1.0 - acc).epsilon(1e-12));
  CHECK(s.at("auroc").get<double>() == 0.5);
  CHECK(s.at("brier").get<double>() ==
        doctest::Approx(2.0 * (1.0 - acc)).epsilon(1e-12));
}

TEST_CASE("playback replays a recorded cache with zero remote calls") {
  Workspace ws("playback");
  auto record = run_cli("estimate" + ws.base +
                        " --m 2 --n 4 --s 3 --spec"
                        " '{\"kind\":\"gaussian\",\"sigma\":0.1}' --a 0.7"
                        " --run-seed 7 --out-dir " + ws.path("rec") +
                        " --cache " + ws.path("cache.jsonl"));
  REQUIRE(record.exit_code == 0);

  auto replay = run_cli("estimate --oracle playback --playback-path " +
                        ws.path("cache.jsonl") + " --dataset " +
                        (ws.dir / "data").string() +
                        " --num-classes 4 --m 2 --n 4 --s 3 --spec"
                        " '{\"kind\":\"gaussian\",\"sigma\":0.1}' --a 0.7"
                        " --run-seed 7 --out-dir " + ws.path("rep"));
  REQUIRE(replay.exit_code == 0);
  auto read_file = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(read_file(ws.path("rec") + "/estimates.csv") ==
        read_file(ws.path("rep") + "/estimates.csv"));

  // same log, different run seed: queries the log cannot answer
  auto broken = run_cli("estimate --oracle playback --playback-path " +
                        ws.path("cache.jsonl") + " --dataset " +
                        (ws.dir / "data").string() +
                        " --num-classes 4 --m 2 --n 4 --s 3 --spec"
                        " '{\"kind\":\"gaussian\",\"sigma\":0.1}' --a 0.7"
                        " --run-seed 8 --out-dir " + ws.path("rep2"));
  CHECK(broken.exit_code == 4);
}

TEST_CASE("synth-data refuses to overwrite and validates arguments") {
  Workspace ws("synth");
  auto clobber = run_cli("synth-data" + ws.base +
                         " --synth-count 4 --run-seed 5");
  CHECK(clobber.exit_code == 2);  // dataset dir already exists

  auto nopng = run_cli("synth-data" + ws.oracle + " --dataset " +
                       ws.path("png_data") +
                       " --synth-count 4 --format png --run-seed 5");
  CHECK(nopng.exit_code == 2);  // png needs 3 channels

  auto noise = run_cli("synth-data" + ws.oracle + " --dataset " +
                       ws.path("d2") + " --synth-count 4 --label-noise 1.5");
  CHECK(noise.exit_code == 2);
}

TEST_CASE("report correlates diagnostics with calibration quality") {
  Workspace ws("report");
  // three runs with distinct (s, sigma) so every column varies
  struct Row {
    const char* name;
    int s;
    const char* sigma;
  };
  for (Row row : {Row{"r1", 2, "0.05"}, Row{"r2", 3, "0.1"},
                  Row{"r3", 5, "0.16"}}) {
    auto est = run_cli("estimate" + ws.base + " --m 4 --n 8 --s " +
                       std::to_string(row.s) +
                       " --spec '{\"kind\":\"gaussian\",\"sigma\":" +
                       row.sigma + "}' --a 0.7 --run-seed 11 --out-dir " +
                       ws.path(row.name) + " --cache " +
                       ws.path("cache.jsonl"));
    REQUIRE(est.exit_code == 0);
    auto diag = run_cli("diagnose" + ws.base +
                        " --spec '{\"kind\":\"gaussian\",\"sigma\":" +
                        row.sigma + "}' --diag-images 4 --draws 40"
                        " --run-seed 11 --out-dir " + ws.path(row.name));
    REQUIRE(diag.exit_code == 0);
  }
  auto rep = run_cli("report --runs " + ws.path("r1") + " --runs " +
                     ws.path("r2") + " --runs " + ws.path("r3") +
                     " --out-dir " + ws.path("rep"));
  REQUIRE(rep.exit_code == 0);
  CHECK(rep.summary().at("correlated") == 3);
  REQUIRE(fs::exists(ws.path("rep") + "/correlations.csv"));
  CHECK(count_lines(ws.path("rep") + "/correlations.csv") == 1 + 6);
  std::ifstream in(ws.path("rep") + "/correlations.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "x,y,r,p");
}
