#include <cmath>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "qcal/errors.hpp"
#include "qcal/estimation.hpp"
#include "qcal/oracle.hpp"
#include "qcal/rng.hpp"
#include "qcal/transforms.hpp"

using qcal::CachedOracle;
using qcal::CounterRng;
using qcal::estimate_dataset;
using qcal::estimate_pa;
using qcal::fit_a;
using qcal::GaussianSpec;
using qcal::Image;
using qcal::Label;
using qcal::PaEstimate;
using qcal::QueryCache;
using qcal::Shape;
using qcal::SyntheticModel;
using qcal::TransformSpec;

namespace {

Image random_image(Shape shape, std::uint64_t seed, float lo = 0.0f,
                   float hi = 1.0f) {
  CounterRng rng(seed);
  Image img(shape.height, shape.width, shape.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = lo + static_cast<float>(rng.uniform(i)) * (hi - lo);
  }
  return img;
}

// Answers a fixed script: first call returns script[0], next script[1], ...
struct ScriptedOracle final : qcal::Oracle {
  std::vector<Label> script;
  std::size_t next = 0;
  Label top1(const Image&) override {
    REQUIRE(next < script.size());
    return script[next++];
  }
  Shape input_shape() const override { return {}; }
  int num_classes() const override { return 0; }
};

}  // namespace

TEST_CASE("match counts map to clipped rates") {
  // s = 10: clip bounds [0.05, 0.95]
  auto e = PaEstimate::from_counts(3, 2, 7, 10);
  CHECK(e.sample_id == 3);
  CHECK(e.base_label == 2);
  CHECK(e.matches == 7);
  CHECK(e.s == 10);
  CHECK(e.p_a_raw == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(e.p_a_clipped == doctest::Approx(0.7).epsilon(1e-15));

  CHECK(PaEstimate::from_counts(0, 0, 10, 10).p_a_clipped ==
        doctest::Approx(0.95).epsilon(1e-15));
  CHECK(PaEstimate::from_counts(0, 0, 0, 10).p_a_clipped ==
        doctest::Approx(0.05).epsilon(1e-15));

  // s = 2: raw rates {0, 0.5, 1} clip to {0.25, 0.5, 0.75}
  CHECK(PaEstimate::from_counts(0, 0, 0, 2).p_a_clipped == 0.25);
  CHECK(PaEstimate::from_counts(0, 0, 1, 2).p_a_clipped == 0.5);
  CHECK(PaEstimate::from_counts(0, 0, 2, 2).p_a_clipped == 0.75);

  CHECK_THROWS_AS(PaEstimate::from_counts(0, 0, -1, 10), qcal::IngestError);
  CHECK_THROWS_AS(PaEstimate::from_counts(0, 0, 11, 10), qcal::IngestError);
  CHECK_THROWS_AS(PaEstimate::from_counts(0, 0, 0, 0), qcal::IngestError);
}

TEST_CASE("estimate_pa counts agreements with the base answer") {
  // base answer 4, then 7 of 10 transformed queries agree
  ScriptedOracle oracle;
  oracle.script = {4, 4, 4, 2, 4, 4, 1, 4, 4, 2, 4};
  Image img = random_image({3, 3, 1}, 5);
  auto e = estimate_pa(oracle, img, GaussianSpec{0.05}, 10, 99);
  CHECK(e.base_label == 4);
  CHECK(e.matches == 7);
  CHECK(e.s == 10);
  CHECK(e.p_a_raw == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(oracle.next == 11);  // exactly s + 1 queries
}

TEST_CASE("estimate_pa with s = 0 trusts the single answer") {
  ScriptedOracle oracle;
  oracle.script = {6};
  auto e = estimate_pa(oracle, random_image({2, 2, 1}, 6), GaussianSpec{0.1},
                       0, 1);
  CHECK(e.base_label == 6);
  CHECK(e.s == 0);
  CHECK(e.matches == 0);
  CHECK(e.p_a_raw == 1.0);
  CHECK(e.p_a_clipped == 1.0);
  CHECK(oracle.next == 1);

  CHECK_THROWS_AS(estimate_pa(oracle, random_image({2, 2, 1}, 6),
                              GaussianSpec{0.1}, -1, 1),
                  qcal::ConfigError);
}

TEST_CASE("estimate queries are replayable through a cache") {
  Shape shape{4, 4, 1};
  auto model = SyntheticModel::random(shape, 6, 3, 21);
  std::vector<Image> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back(random_image(shape, 300 + i));

  QueryCache cache;
  CachedOracle cached(model, cache);
  const TransformSpec spec = GaussianSpec{0.08};
  auto first = estimate_dataset(cached, imgs, spec, 6, 17);
  CHECK(cached.calls() == 5 * 7);
  CHECK(cached.misses() == cached.calls());  // distinct draws, cold cache

  // identical run: all hits, identical estimates
  auto second = estimate_dataset(cached, imgs, spec, 6, 17);
  CHECK(cached.calls() == 2 * 5 * 7);
  CHECK(cached.misses() == 5 * 7);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].matches == second[i].matches);
    CHECK(first[i].base_label == second[i].base_label);
  }

  // different run seed re-randomizes the transforms: new queries
  estimate_dataset(cached, imgs, spec, 6, 18);
  CHECK(cached.misses() > 5 * 7);
}

TEST_CASE("estimate sample ids follow the index offset") {
  Shape shape{3, 3, 1};
  auto model = SyntheticModel::random(shape, 4, 3, 8);
  std::vector<Image> imgs{random_image(shape, 1), random_image(shape, 2)};
  auto rows = estimate_dataset(model, imgs, GaussianSpec{0.05}, 3, 7, 10);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].sample_id == 10);
  CHECK(rows[1].sample_id == 11);

  // offset rows reproduce the same draws as the tail of a wider run
  auto wide = estimate_dataset(
      model, std::vector<Image>{random_image(shape, 0), imgs[0], imgs[1]},
      GaussianSpec{0.05}, 3, 7, 9);
  CHECK(wide[1].matches == rows[0].matches);
  CHECK(wide[2].matches == rows[1].matches);
}

TEST_CASE("parallel and serial estimation agree") {
  Shape shape{5, 5, 3};
  auto model = SyntheticModel::random(shape, 8, 4, 33);
  std::vector<Image> imgs;
  for (int i = 0; i < 12; ++i) imgs.push_back(random_image(shape, 400 + i));
  for (const TransformSpec& spec : std::vector<TransformSpec>{
           GaussianSpec{0.1}, qcal::RotationSpec{20.0}}) {
    auto par = estimate_dataset(model, imgs, spec, 4, 55);
    auto ser = qcal::serial::estimate_dataset(model, imgs, spec, 4, 55);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
      CHECK(par[i].sample_id == ser[i].sample_id);
      CHECK(par[i].base_label == ser[i].base_label);
      CHECK(par[i].matches == ser[i].matches);
      CHECK(par[i].p_a_clipped == ser[i].p_a_clipped);
    }
  }
}

TEST_CASE("oracle failures abort estimation") {
  struct ThrowingOracle final : qcal::Oracle {
    Label top1(const Image&) override {
      throw qcal::OracleError("backend down");
    }
    Shape input_shape() const override { return {}; }
    int num_classes() const override { return 0; }
  } oracle;
  std::vector<Image> imgs{random_image({2, 2, 1}, 1)};
  CHECK_THROWS_AS(estimate_dataset(oracle, imgs, GaussianSpec{0.1}, 2, 1),
                  qcal::OracleError);
}

TEST_CASE("fit_a recovers the confidence scale that generated the labels") {
  // Construct validation data whose correctness is *exactly* Bernoulli with
  // probability gaussian_confidence(p_a, 0.5), using a quasi-random uniform
  // sequence; the a-grid must pick 0.5 over coarser and finer scales.
  const double a_true = 0.5;
  const int n = 2000;
  CounterRng rng(7007);
  std::vector<PaEstimate> estimates;
  std::vector<Label> truth;
  for (int i = 0; i < n; ++i) {
    double p = 0.55 + 0.4 * rng.uniform(2 * i);
    int matches = static_cast<int>(std::lround(p * 10000));
    auto e = PaEstimate::from_counts(i, 0, matches, 10000);
    double conf = qcal::gaussian_confidence(e.p_a_clipped, a_true);
    bool correct = rng.uniform(2 * i + 1) < conf;
    estimates.push_back(e);
    truth.push_back(correct ? 0 : 1);
  }
  std::vector<double> grid{0.1, 0.25, 0.5, 1.0, 2.0};
  auto fit = fit_a(estimates, truth, GaussianSpec{0.1}, 2,
                   qcal::ModelKind::gaussian, nullptr, grid);
  CHECK(fit.best_a == 0.5);
  CHECK(fit.trace.size() == grid.size());
  CHECK(fit.objective <= 0.05);
}

TEST_CASE("fit_a on a single-point grid annotates the spec") {
  std::vector<PaEstimate> estimates;
  std::vector<Label> truth;
  CounterRng rng(3);
  for (int i = 0; i < 50; ++i) {
    estimates.push_back(PaEstimate::from_counts(i, 0, 5 + (i % 5), 10));
    truth.push_back(rng.uniform(i) < 0.7 ? 0 : 1);
  }
  std::vector<double> grid{0.8};
  auto fit = fit_a(estimates, truth, qcal::RotationSpec{15.0}, 2,
                   qcal::ModelKind::gaussian, nullptr, grid);
  CHECK(fit.best_a == 0.8);
  CHECK(qcal::spec_kind(fit.best_spec) == "rotation");
}

TEST_CASE("fit_a validation") {
  std::vector<PaEstimate> estimates{PaEstimate::from_counts(0, 0, 5, 10)};
  std::vector<Label> truth{0};
  CHECK_THROWS_AS(fit_a({}, {}, GaussianSpec{0.1}, 2), qcal::IngestError);
  CHECK_THROWS_AS(fit_a(estimates, {0, 1}, GaussianSpec{0.1}, 2),
                  qcal::IngestError);
  CHECK_THROWS_AS(fit_a(estimates, truth, GaussianSpec{0.1}, 2,
                        qcal::ModelKind::gaussian, nullptr, {}),
                  qcal::ConfigError);
  CHECK_THROWS_AS(fit_a(estimates, truth, GaussianSpec{0.1}, 2,
                        qcal::ModelKind::transfer, nullptr),
                  qcal::ConfigError);
}

TEST_CASE("fit json round-trip") {
  std::vector<PaEstimate> estimates;
  std::vector<Label> truth;
  CounterRng rng(9);
  for (int i = 0; i < 40; ++i) {
    estimates.push_back(PaEstimate::from_counts(i, 0, i % 11, 10));
    truth.push_back(rng.uniform(i) < 0.5 ? 0 : 1);
  }
  auto fit = fit_a(estimates, truth, GaussianSpec{0.12}, 2);
  auto back = qcal::FitResult::from_json(fit.to_json());
  CHECK(back.best_a == fit.best_a);
  CHECK(back.objective == fit.objective);
  CHECK(qcal::spec_to_json(back.best_spec) == qcal::spec_to_json(fit.best_spec));
  REQUIRE(back.trace.size() == fit.trace.size());
  CHECK(back.trace[3].a == fit.trace[3].a);
  CHECK(back.trace[3].ece == fit.trace[3].ece);

  CHECK_THROWS_AS(qcal::FitResult::from_json(nlohmann::json::array()),
                  qcal::IngestError);
  CHECK_THROWS_AS(qcal::FitResult::from_json(nlohmann::json{{"best_a", 1.0}}),
                  qcal::IngestError);
}

TEST_CASE("confidence assignment is monotone in the match count") {
  std::vector<PaEstimate> estimates;
  for (int m = 0; m <= 10; ++m) {
    estimates.push_back(PaEstimate::from_counts(m, 0, m, 10));
  }
  auto confs = qcal::assign_confidences(
      estimates, qcal::CalibrationModel::make_gaussian(0.9));
  REQUIRE(confs.size() == estimates.size());
  for (std::size_t i = 1; i < confs.size(); ++i) {
    CHECK(confs[i] > confs[i - 1]);
  }
  CHECK(confs[5] == 0.5);  // p_a = 0.5 sits at the fixed point
}

TEST_CASE("estimates csv round-trips exactly") {
  std::vector<PaEstimate> estimates;
  std::vector<double> confs;
  CounterRng rng(77);
  for (int i = 0; i < 25; ++i) {
    estimates.push_back(PaEstimate::from_counts(i, i % 7, i % 11, 10));
    confs.push_back(qcal::gaussian_confidence(estimates.back().p_a_clipped,
                                              0.37));
  }
  std::ostringstream out;
  qcal::write_estimates_csv(out, estimates, confs);
  std::istringstream in(out.str());
  auto rows = qcal::read_estimates_csv(in);
  REQUIRE(rows.estimates.size() == estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    CHECK(rows.estimates[i].sample_id == estimates[i].sample_id);
    CHECK(rows.estimates[i].base_label == estimates[i].base_label);
    CHECK(rows.estimates[i].matches == estimates[i].matches);
    CHECK(rows.estimates[i].s == estimates[i].s);
    CHECK(rows.estimates[i].p_a_raw == estimates[i].p_a_raw);
    CHECK(rows.estimates[i].p_a_clipped == estimates[i].p_a_clipped);
    CHECK(rows.confidences[i] == confs[i]);
  }
}

TEST_CASE("estimates csv parser rejects malformed input") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return qcal::read_estimates_csv(in);
  };
  const std::string header =
      "sample_id,base_label,matches,s,p_a_raw,p_a_clipped,confidence\n";
  CHECK_NOTHROW(parse(header + "0,1,5,10,0.5,0.5,0.5\n"));
  CHECK_THROWS_AS(parse("bogus\n"), qcal::IngestError);
  CHECK_THROWS_AS(parse(header + "0,1,5\n"), qcal::IngestError);
  CHECK_THROWS_AS(parse(header + "0,1,abc,10,0.5,0.5,0.5\n"),
                  qcal::IngestError);
  CHECK_THROWS_AS(parse(header + "0,1,5,10,0.5,0.5,1.5\n"),
                  qcal::IngestError);
  CHECK_THROWS_AS(parse(header + "0,1,50,10,5,5,0.5\n"), qcal::IngestError);
}
