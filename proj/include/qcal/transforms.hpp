#pragma once

#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qcal/image.hpp"
#include "qcal/rng.hpp"

namespace qcal {

// Randomized input transforms. A "magnitude zero" spec of any kind is an
// exact identity on the image.
struct GaussianSpec {
  double sigma = 0.1;  // i.i.d. per-element noise std; output clamped to [0,1]
};
struct RotationSpec {
  double max_degrees = 30.0;  // angle ~ Uniform(-max_degrees, +max_degrees)
};
struct AffineSpec {
  double max_degrees = 10.0;
  double max_translate = 0.1;    // per axis, fraction of that axis length
  double max_scale_delta = 0.1;  // scale ~ Uniform(1 - delta, 1 + delta)
};
struct ElasticSpec {
  double alpha = 20.0;   // displacement amplitude in pixels
  double sigma_e = 5.0;  // smoothing std; kernel truncated at 4*sigma_e
};

using TransformSpec =
    std::variant<GaussianSpec, RotationSpec, AffineSpec, ElasticSpec>;

// Throws std::domain_error on out-of-range parameters (negative magnitudes,
// sigma_e <= 0 while alpha > 0, max_scale_delta > 1).
void validate_spec(const TransformSpec& spec);

// One random draw of the transform applied to `img`. Deterministic in
// `seed` alone: every random decision is a pure function of (seed, counter),
// so results are bit-identical across thread counts and schedules.
Image apply_transform(const Image& img, const TransformSpec& spec,
                      const SampleSeed& seed);

namespace serial {
// Plain-loop reference implementation; must match apply_transform
// bit-for-bit.
Image apply_transform(const Image& img, const TransformSpec& spec,
                      const SampleSeed& seed);
}  // namespace serial

// Deterministic kernels underneath the random draws, exposed for direct
// testing. Bilinear interpolation, zero padding outside the image, resampled
// about the pixel-grid center ((width-1)/2, (height-1)/2).
Image rotate_bilinear(const Image& img, double degrees);
Image affine_bilinear(const Image& img, double degrees, double translate_x_px,
                      double translate_y_px, double scale);

// "gaussian", "rotation", "affine" or "elastic".
std::string spec_kind(const TransformSpec& spec);

// The per-family hyperparameter search grids.
std::vector<TransformSpec> transform_grid(const std::string& family);

// Wire format: {"kind": "...", <parameters>}.
nlohmann::json spec_to_json(const TransformSpec& spec);
TransformSpec spec_from_json(const nlohmann::json& j);

}  // namespace qcal
