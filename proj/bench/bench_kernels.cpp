// Times the OpenMP kernels against their serial reference twins and checks
// they agree bit-for-bit on the benchmark inputs.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "qcal/diagnostics.hpp"
#include "qcal/estimation.hpp"
#include "qcal/oracle.hpp"
#include "qcal/rng.hpp"
#include "qcal/transforms.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

qcal::Image random_image(int h, int w, int c, std::uint64_t key) {
  qcal::Image img(h, w, c);
  qcal::CounterRng rng(key);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<float>(rng.uniform(i));
  return img;
}

void row(const std::string& name, double serial_ms, double parallel_ms,
         bool identical) {
  std::printf("%-28s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   %s\n",
              name.c_str(), serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: not enabled\n");
#endif

  const int reps = 3;
  qcal::Image big = random_image(256, 256, 3, 1);
  qcal::SampleSeed seed{7, 0, 0};

  std::vector<std::pair<std::string, qcal::TransformSpec>> specs = {
      {"gaussian 256x256x3", qcal::GaussianSpec{0.1}},
      {"rotation 256x256x3", qcal::RotationSpec{30.0}},
      {"affine 256x256x3", qcal::AffineSpec{10.0, 0.1, 0.1}},
      {"elastic 256x256x3", qcal::ElasticSpec{20.0, 5.0}},
  };
  for (const auto& [name, spec] : specs) {
    qcal::Image serial_out = qcal::serial::apply_transform(big, spec, seed);
    qcal::Image parallel_out = qcal::apply_transform(big, spec, seed);
    bool same = serial_out.data == parallel_out.data;
    double ts = time_ms([&] { qcal::serial::apply_transform(big, spec, seed); },
                        reps);
    double tp = time_ms([&] { qcal::apply_transform(big, spec, seed); }, reps);
    row(name, ts, tp, same);
  }

  {
    auto model = qcal::SyntheticModel::random({32, 32, 3}, 16, 10, 3);
    std::vector<qcal::Image> imgs;
    for (int i = 0; i < 48; ++i)
      imgs.push_back(random_image(32, 32, 3, 100 + i));
    qcal::TransformSpec spec = qcal::GaussianSpec{0.1};
    auto es = qcal::serial::estimate_dataset(model, imgs, spec, 24, 11);
    auto ep = qcal::estimate_dataset(model, imgs, spec, 24, 11);
    bool same = es.size() == ep.size();
    for (std::size_t i = 0; same && i < es.size(); ++i)
      same = es[i].matches == ep[i].matches &&
             es[i].base_label == ep[i].base_label;
    double ts = time_ms(
        [&] { qcal::serial::estimate_dataset(model, imgs, spec, 24, 11); }, 1);
    double tp =
        time_ms([&] { qcal::estimate_dataset(model, imgs, spec, 24, 11); }, 1);
    row("estimate 48x(24+1)q", ts, tp, same);
  }

  {
    auto model = qcal::SyntheticModel::random({16, 16, 1}, 8, 4, 5);
    std::vector<qcal::Image> imgs;
    for (int i = 0; i < 32; ++i)
      imgs.push_back(random_image(16, 16, 1, 900 + i));
    qcal::TransformSpec spec = qcal::GaussianSpec{0.1};
    auto ds = qcal::serial::margin_shift_draws(model, imgs, spec, 250, 13);
    auto dp = qcal::margin_shift_draws(model, imgs, spec, 250, 13);
    bool same = ds == dp;
    double ts = time_ms(
        [&] { qcal::serial::margin_shift_draws(model, imgs, spec, 250, 13); },
        1);
    double tp = time_ms(
        [&] { qcal::margin_shift_draws(model, imgs, spec, 250, 13); }, 1);
    row("margin draws 32x250", ts, tp, same);
  }

  return 0;
}
