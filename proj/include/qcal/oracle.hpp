#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "qcal/image.hpp"

namespace qcal {

using Label = int;

// Hex-encoded 256-bit digest of the image's serialized bytes; the identity
// of a query for caching and playback.
std::string content_hash(const Image& img);

std::string base64_encode(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// A top-1 classifier. Implementations validate the image shape when they
// know their input shape and throw ConfigError on mismatch.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual Label top1(const Image& img) = 0;
  // All-zero shape means "unknown" and disables shape checking.
  virtual Shape input_shape() const = 0;
  // 0 means "unknown".
  virtual int num_classes() const = 0;
};

// A classifier whose internals are open for inspection.
class WhiteBoxOracle : public Oracle {
 public:
  virtual Label runner_up(const Image& img) const = 0;
  // (w_a - w_b)^T h(x) + (b_a - b_b) on the latent embedding h.
  virtual double latent_margin(const Image& img, Label a, Label b) const = 0;
  // Softmax probability of the top-1 class.
  virtual double true_confidence(const Image& img) const = 0;
};

// Linear-softmax classifier over a (possibly input-scaled) linear embedding:
// h(x) = gain(x) * J x with gain(x) = bias + scale * |x[0]|, logits
// W h(x) + b. Ties in the argmax resolve to the lowest class index.
class SyntheticModel final : public WhiteBoxOracle {
 public:
  struct Gain {
    double bias;
    double scale;
    constexpr Gain(double b = 1.0, double s = 0.0) : bias(b), scale(s) {}
  };
  // The standard non-constant gain variant: 0.5 + |x[0]|.
  static Gain nonlinear_gain() { return {0.5, 1.0}; }

  SyntheticModel(Shape shape, int latent_dim, int num_classes,
                 std::vector<double> encoder, std::vector<double> weights,
                 std::vector<double> biases, Gain gain = Gain());

  // Entries drawn from a seeded stream: encoder ~ N(0, 1/input_dim),
  // weights ~ N(0, 1/latent_dim), biases ~ N(0, 0.05^2).
  static SyntheticModel random(Shape shape, int latent_dim, int num_classes,
                               std::uint64_t model_seed, Gain gain = Gain());

  Label top1(const Image& img) override;
  Shape input_shape() const override { return shape_; }
  int num_classes() const override { return num_classes_; }

  Label runner_up(const Image& img) const override;
  double latent_margin(const Image& img, Label a, Label b) const override;
  double true_confidence(const Image& img) const override;

  std::vector<double> logits(const Image& img) const;

  int latent_dim() const { return latent_dim_; }
  Gain gain() const { return gain_; }
  // Row-major latent_dim x input_dim.
  const std::vector<double>& encoder() const { return encoder_; }
  // Row-major num_classes x latent_dim.
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& biases() const { return biases_; }

 private:
  std::vector<double> embed(const Image& img) const;
  void check_shape(const Image& img) const;

  Shape shape_;
  int latent_dim_;
  int num_classes_;
  std::vector<double> encoder_;
  std::vector<double> weights_;
  std::vector<double> biases_;
  Gain gain_;
};

// Replays previously recorded answers; a JSON-lines file of
// {"hash": "...", "label": <int>} entries. Unknown images raise
// MissingPredictionError.
class PlaybackOracle final : public Oracle {
 public:
  explicit PlaybackOracle(const std::filesystem::path& log_path,
                          Shape declared_shape = {}, int num_classes = 0);
  explicit PlaybackOracle(std::unordered_map<std::string, Label> entries,
                          Shape declared_shape = {}, int num_classes = 0);

  Label top1(const Image& img) override;
  Shape input_shape() const override { return shape_; }
  int num_classes() const override { return num_classes_; }
  std::size_t size() const { return map_.size(); }

 private:
  std::unordered_map<std::string, Label> map_;
  Shape shape_;
  int num_classes_;
};

// Hash -> label store, optionally persisted as an append-only JSON-lines
// file (the same format PlaybackOracle reads). Thread safe.
class QueryCache {
 public:
  QueryCache() = default;
  // Loads existing entries if the file exists; appends on insert.
  explicit QueryCache(const std::filesystem::path& path);

  std::optional<Label> lookup(const std::string& hash) const;
  void insert(const std::string& hash, Label label);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Label> map_;
  std::ofstream out_;
};

// Routes every query through a cache: hits never reach the wrapped oracle.
// Two concurrent misses of the same image may both reach it; both store the
// same answer, so the cache stays consistent.
class CachedOracle final : public Oracle {
 public:
  CachedOracle(Oracle& inner, QueryCache& cache)
      : inner_(inner), cache_(cache) {}

  Label top1(const Image& img) override;
  Shape input_shape() const override { return inner_.input_shape(); }
  int num_classes() const override { return inner_.num_classes(); }

  std::uint64_t calls() const { return calls_.load(); }    // top1 invocations
  std::uint64_t misses() const { return misses_.load(); }  // inner queries
  std::uint64_t hits() const { return calls() - misses(); }

 private:
  Oracle& inner_;
  QueryCache& cache_;
  std::atomic<std::uint64_t> calls_{0};
  std::atomic<std::uint64_t> misses_{0};
};

}  // namespace qcal
