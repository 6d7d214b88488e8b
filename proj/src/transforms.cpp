#include "qcal/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "qcal/errors.hpp"

namespace qcal {

namespace {

constexpr double kPi = 3.141592653589793;

float clamp01(double v) {
  return static_cast<float>(std::min(1.0, std::max(0.0, v)));
}

// Zero padding outside the image; exact at integer coordinates.
double bilinear(const Image& img, int c, double sx, double sy) {
  const double fx0 = std::floor(sx);
  const double fy0 = std::floor(sy);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = sx - fx0;
  const double ay = sy - fy0;

  auto px = [&](int y, int x) -> double {
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) return 0.0;
    return img.at(y, x, c);
  };

  return (1.0 - ay) * ((1.0 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) +
         ay * ((1.0 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
}

// Inverse map of: scale about center, rotate about center, then translate.
struct InverseAffine {
  double cx, cy;        // pixel-grid center
  double cos_t, sin_t;  // of the forward rotation angle
  double tx, ty;        // forward translation in pixels
  double inv_scale;

  void source(double x, double y, double* sx, double* sy) const {
    const double dx = x - cx - tx;
    const double dy = y - cy - ty;
    *sx = cx + (cos_t * dx + sin_t * dy) * inv_scale;
    *sy = cy + (-sin_t * dx + cos_t * dy) * inv_scale;
  }
};

InverseAffine make_inverse_affine(const Image& img, double degrees, double tx,
                                  double ty, double scale) {
  const double theta = degrees * (kPi / 180.0);
  return InverseAffine{(img.width - 1) / 2.0, (img.height - 1) / 2.0,
                       std::cos(theta),       std::sin(theta),
                       tx,                    ty,
                       1.0 / scale};
}

Image warp(const Image& img, const InverseAffine& m, bool parallel) {
  Image out(img.height, img.width, img.channels);
  const int rows = img.height;
#pragma omp parallel for schedule(static) if (parallel)
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double sx, sy;
      m.source(x, y, &sx, &sy);
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = static_cast<float>(bilinear(img, c, sx, sy));
      }
    }
  }
  return out;
}

Image gaussian_noise(const Image& img, double sigma, const CounterRng& rng,
                     bool parallel) {
  Image out(img.height, img.width, img.channels);
  const auto n = static_cast<std::ptrdiff_t>(img.data.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out.data[i] = clamp01(img.data[i] + sigma * rng.normal(i));
  }
  return out;
}

// Truncated, renormalized smoothing kernel. Offsets run over |j| <= 4*sigma.
std::vector<double> smoothing_kernel(double sigma_e) {
  const int radius = static_cast<int>(std::floor(4.0 * sigma_e));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    double w = std::exp(-0.5 * (j / sigma_e) * (j / sigma_e));
    k[j + radius] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

// Separable blur of one H x W field, zero padding at the borders.
std::vector<double> blur_field(const std::vector<double>& field, int h, int w,
                               const std::vector<double>& kernel,
                               bool parallel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(field.size()), out(field.size());
  const auto n = static_cast<std::ptrdiff_t>(field.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i) / w;
    const int x = static_cast<int>(i) % w;
    double acc = 0.0;
    for (int j = -radius; j <= radius; ++j) {
      const int xx = x + j;
      if (xx >= 0 && xx < w) acc += kernel[j + radius] * field[y * w + xx];
    }
    tmp[i] = acc;
  }
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i) / w;
    const int x = static_cast<int>(i) % w;
    double acc = 0.0;
    for (int j = -radius; j <= radius; ++j) {
      const int yy = y + j;
      if (yy >= 0 && yy < h) acc += kernel[j + radius] * tmp[yy * w + x];
    }
    out[i] = acc;
  }
  return out;
}

Image elastic(const Image& img, const ElasticSpec& spec, const CounterRng& rng,
              bool parallel) {
  const int h = img.height, w = img.width;
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  // Raw per-axis Uniform(-1,1) fields; counters 0..hw-1 drive x, hw..2hw-1
  // drive y.
  std::vector<double> fx(hw), fy(hw);
  const auto n = static_cast<std::ptrdiff_t>(hw);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    fx[i] = 2.0 * rng.uniform(i) - 1.0;
    fy[i] = 2.0 * rng.uniform(hw + i) - 1.0;
  }

  const auto kernel = smoothing_kernel(spec.sigma_e);
  fx = blur_field(fx, h, w, kernel, parallel);
  fy = blur_field(fy, h, w, kernel, parallel);

  Image out(h, w, img.channels);
#pragma omp parallel for schedule(static) if (parallel)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x + spec.alpha * fx[static_cast<std::size_t>(y) * w + x];
      const double sy = y + spec.alpha * fy[static_cast<std::size_t>(y) * w + x];
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = static_cast<float>(bilinear(img, c, sx, sy));
      }
    }
  }
  return out;
}

Image apply_impl(const Image& img, const TransformSpec& spec,
                 const SampleSeed& seed, bool parallel) {
  validate_spec(spec);
  CounterRng rng(seed.key());

  if (const auto* g = std::get_if<GaussianSpec>(&spec)) {
    return gaussian_noise(img, g->sigma, rng, parallel);
  }
  if (const auto* r = std::get_if<RotationSpec>(&spec)) {
    const double deg = rng.uniform(0, -r->max_degrees, r->max_degrees);
    return warp(img, make_inverse_affine(img, deg, 0.0, 0.0, 1.0), parallel);
  }
  if (const auto* a = std::get_if<AffineSpec>(&spec)) {
    // Draw order is part of the reproducibility contract.
    const double deg = rng.uniform(0, -a->max_degrees, a->max_degrees);
    const double tx =
        rng.uniform(1, -a->max_translate * img.width, a->max_translate * img.width);
    const double ty = rng.uniform(2, -a->max_translate * img.height,
                                  a->max_translate * img.height);
    const double scale =
        rng.uniform(3, 1.0 - a->max_scale_delta, 1.0 + a->max_scale_delta);
    return warp(img, make_inverse_affine(img, deg, tx, ty, scale), parallel);
  }
  const auto& e = std::get<ElasticSpec>(spec);
  if (e.alpha == 0.0) {
    // Exact identity; the smoothing kernel may not even be well defined.
    return img;
  }
  return elastic(img, e, rng, parallel);
}

}  // namespace

void validate_spec(const TransformSpec& spec) {
  if (const auto* g = std::get_if<GaussianSpec>(&spec)) {
    if (!(g->sigma >= 0.0)) {
      throw std::domain_error("gaussian spec: sigma must be >= 0");
    }
  } else if (const auto* r = std::get_if<RotationSpec>(&spec)) {
    if (!(r->max_degrees >= 0.0)) {
      throw std::domain_error("rotation spec: max_degrees must be >= 0");
    }
  } else if (const auto* a = std::get_if<AffineSpec>(&spec)) {
    if (!(a->max_degrees >= 0.0) || !(a->max_translate >= 0.0)) {
      throw std::domain_error("affine spec: magnitudes must be >= 0");
    }
    if (!(a->max_scale_delta >= 0.0 && a->max_scale_delta <= 1.0)) {
      throw std::domain_error("affine spec: max_scale_delta must lie in [0,1]");
    }
  } else {
    const auto& e = std::get<ElasticSpec>(spec);
    if (!(e.alpha >= 0.0)) {
      throw std::domain_error("elastic spec: alpha must be >= 0");
    }
    if (e.alpha > 0.0 && !(e.sigma_e > 0.0)) {
      throw std::domain_error("elastic spec: sigma_e must be > 0");
    }
  }
}

Image apply_transform(const Image& img, const TransformSpec& spec,
                      const SampleSeed& seed) {
  return apply_impl(img, spec, seed, true);
}

namespace serial {
Image apply_transform(const Image& img, const TransformSpec& spec,
                      const SampleSeed& seed) {
  return apply_impl(img, spec, seed, false);
}
}  // namespace serial

Image rotate_bilinear(const Image& img, double degrees) {
  return warp(img, make_inverse_affine(img, degrees, 0.0, 0.0, 1.0), false);
}

Image affine_bilinear(const Image& img, double degrees, double translate_x_px,
                      double translate_y_px, double scale) {
  return warp(img,
              make_inverse_affine(img, degrees, translate_x_px, translate_y_px,
                                  scale),
              false);
}

std::string spec_kind(const TransformSpec& spec) {
  switch (spec.index()) {
    case 0: return "gaussian";
    case 1: return "rotation";
    case 2: return "affine";
    default: return "elastic";
  }
}

std::vector<TransformSpec> transform_grid(const std::string& family) {
  std::vector<TransformSpec> grid;
  if (family == "gaussian") {
    for (double s : {0.01, 0.05, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2}) {
      grid.push_back(GaussianSpec{s});
    }
  } else if (family == "rotation") {
    for (double d : {10.0, 20.0, 30.0, 40.0, 50.0, 60.0}) {
      grid.push_back(RotationSpec{d});
    }
  } else if (family == "affine") {
    for (double d : {0.0, 10.0, 30.0}) {
      for (double t : {0.0, 0.1, 0.3}) {
        for (double s : {0.0, 0.1, 0.3, 1.0}) {
          grid.push_back(AffineSpec{d, t, s});
        }
      }
    }
  } else if (family == "elastic") {
    for (double a : {10.0, 20.0, 50.0, 70.0}) {
      for (double s : {2.0, 5.0, 10.0}) {
        grid.push_back(ElasticSpec{a, s});
      }
    }
  } else {
    throw ConfigError("unknown transform family: " + family);
  }
  return grid;
}

nlohmann::json spec_to_json(const TransformSpec& spec) {
  nlohmann::json j{{"kind", spec_kind(spec)}};
  if (const auto* g = std::get_if<GaussianSpec>(&spec)) {
    j["sigma"] = g->sigma;
  } else if (const auto* r = std::get_if<RotationSpec>(&spec)) {
    j["max_degrees"] = r->max_degrees;
  } else if (const auto* a = std::get_if<AffineSpec>(&spec)) {
    j["max_degrees"] = a->max_degrees;
    j["max_translate"] = a->max_translate;
    j["max_scale_delta"] = a->max_scale_delta;
  } else {
    const auto& e = std::get<ElasticSpec>(spec);
    j["alpha"] = e.alpha;
    j["sigma_e"] = e.sigma_e;
  }
  return j;
}

TransformSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) {
    throw ConfigError("transform spec: expected {\"kind\", ...}");
  }
  const std::string kind = j.at("kind").get<std::string>();
  TransformSpec spec;
  try {
    if (kind == "gaussian") {
      spec = GaussianSpec{j.at("sigma").get<double>()};
    } else if (kind == "rotation") {
      spec = RotationSpec{j.at("max_degrees").get<double>()};
    } else if (kind == "affine") {
      spec = AffineSpec{j.at("max_degrees").get<double>(),
                        j.at("max_translate").get<double>(),
                        j.at("max_scale_delta").get<double>()};
    } else if (kind == "elastic") {
      spec = ElasticSpec{j.at("alpha").get<double>(),
                         j.at("sigma_e").get<double>()};
    } else {
      throw ConfigError("transform spec: unknown kind " + kind);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("transform spec: ") + e.what());
  }
  try {
    validate_spec(spec);
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

}  // namespace qcal
