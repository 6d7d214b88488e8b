#include "qcal/oracle.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <mutex>
#include <stdexcept>

#include <json.hpp>

#include "qcal/errors.hpp"
#include "qcal/rng.hpp"

namespace qcal {

std::string content_hash(const Image& img) {
  const auto bytes = to_raw_bytes(img);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw OracleError("content_hash: digest failure");
  }
  static const char* hex = "0123456789abcdef";
  std::string out(len * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xf];
  }
  return out;
}

namespace {
const char* kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::uint8_t* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    std::uint32_t v = data[i] << 16;
    if (i + 1 < len) v |= data[i + 1] << 8;
    if (i + 2 < len) v |= data[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64[v & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) {
    throw IngestError("base64: length must be a multiple of 4");
  }
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (int j = 0; j < 4; ++j) {
      char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      int d = value(c);
      if (d < 0 || pad > 0) throw IngestError("base64: invalid input");
      v = v << 6 | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// SyntheticModel

SyntheticModel::SyntheticModel(Shape shape, int latent_dim, int num_classes,
                               std::vector<double> encoder,
                               std::vector<double> weights,
                               std::vector<double> biases, Gain gain)
    : shape_(shape),
      latent_dim_(latent_dim),
      num_classes_(num_classes),
      encoder_(std::move(encoder)),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      gain_(gain) {
  const auto d = static_cast<std::size_t>(shape.count());
  if (latent_dim < 1 || num_classes < 2 || d == 0) {
    throw ConfigError("SyntheticModel: bad dimensions");
  }
  if (encoder_.size() != static_cast<std::size_t>(latent_dim) * d ||
      weights_.size() != static_cast<std::size_t>(num_classes) * latent_dim ||
      biases_.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("SyntheticModel: parameter sizes do not match");
  }
}

SyntheticModel SyntheticModel::random(Shape shape, int latent_dim,
                                      int num_classes,
                                      std::uint64_t model_seed, Gain gain) {
  const auto d = static_cast<std::size_t>(shape.count());
  // Independent streams per parameter block keep the layout stable if one
  // block's size changes.
  CounterRng je(mix64(model_seed + 0x11));
  CounterRng we(mix64(model_seed + 0x22));
  CounterRng be(mix64(model_seed + 0x33));

  std::vector<double> encoder(static_cast<std::size_t>(latent_dim) * d);
  const double enc_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    encoder[i] = enc_scale * je.normal(i);
  }
  std::vector<double> weights(static_cast<std::size_t>(num_classes) *
                              latent_dim);
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = w_scale * we.normal(i);
  }
  std::vector<double> biases(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < biases.size(); ++i) {
    biases[i] = 0.05 * be.normal(i);
  }
  return SyntheticModel(shape, latent_dim, num_classes, std::move(encoder),
                        std::move(weights), std::move(biases), gain);
}

void SyntheticModel::check_shape(const Image& img) const {
  if (!(img.shape() == shape_)) {
    throw ConfigError("SyntheticModel: image shape mismatch");
  }
}

std::vector<double> SyntheticModel::embed(const Image& img) const {
  check_shape(img);
  const auto d = img.data.size();
  const double g = gain_.bias + gain_.scale * std::abs(double{img.data[0]});
  std::vector<double> h(static_cast<std::size_t>(latent_dim_), 0.0);
  for (int l = 0; l < latent_dim_; ++l) {
    const double* row = encoder_.data() + static_cast<std::size_t>(l) * d;
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += row[i] * img.data[i];
    h[static_cast<std::size_t>(l)] = g * acc;
  }
  return h;
}

std::vector<double> SyntheticModel::logits(const Image& img) const {
  const auto h = embed(img);
  std::vector<double> out(static_cast<std::size_t>(num_classes_));
  for (int k = 0; k < num_classes_; ++k) {
    const double* row =
        weights_.data() + static_cast<std::size_t>(k) * latent_dim_;
    double acc = biases_[static_cast<std::size_t>(k)];
    for (int l = 0; l < latent_dim_; ++l) {
      acc += row[l] * h[static_cast<std::size_t>(l)];
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

namespace {
// Lowest index wins ties, both for the winner and the runner-up.
std::pair<int, int> top_two(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) {
      best = i;
    }
  }
  int second = best == 0 ? 1 : 0;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (i == best) continue;
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(second)]) {
      second = i;
    }
  }
  return {best, second};
}
}  // namespace

Label SyntheticModel::top1(const Image& img) { return top_two(logits(img)).first; }

Label SyntheticModel::runner_up(const Image& img) const {
  return top_two(logits(img)).second;
}

double SyntheticModel::latent_margin(const Image& img, Label a,
                                     Label b) const {
  if (a < 0 || a >= num_classes_ || b < 0 || b >= num_classes_ || a == b) {
    throw std::domain_error("latent_margin: bad class pair");
  }
  const auto h = embed(img);
  const double* wa = weights_.data() + static_cast<std::size_t>(a) * latent_dim_;
  const double* wb = weights_.data() + static_cast<std::size_t>(b) * latent_dim_;
  double acc = biases_[static_cast<std::size_t>(a)] -
               biases_[static_cast<std::size_t>(b)];
  for (int l = 0; l < latent_dim_; ++l) {
    acc += (wa[l] - wb[l]) * h[static_cast<std::size_t>(l)];
  }
  return acc;
}

double SyntheticModel::true_confidence(const Image& img) const {
  const auto lg = logits(img);
  const int best = top_two(lg).first;
  const double m = lg[static_cast<std::size_t>(best)];
  double denom = 0.0;
  for (double v : lg) denom += std::exp(v - m);
  return 1.0 / denom;
}

// ---------------------------------------------------------------------------
// PlaybackOracle

namespace {
std::unordered_map<std::string, Label> load_log(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IngestError("playback: cannot open " + path.string());
  }
  std::unordered_map<std::string, Label> map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("hash") ||
        !j.contains("label")) {
      throw IngestError("playback: malformed line " + std::to_string(lineno) +
                        " in " + path.string());
    }
    map[j.at("hash").get<std::string>()] = j.at("label").get<Label>();
  }
  return map;
}
}  // namespace

PlaybackOracle::PlaybackOracle(const std::filesystem::path& log_path,
                               Shape declared_shape, int num_classes)
    : map_(load_log(log_path)), shape_(declared_shape),
      num_classes_(num_classes) {}

PlaybackOracle::PlaybackOracle(std::unordered_map<std::string, Label> entries,
                               Shape declared_shape, int num_classes)
    : map_(std::move(entries)), shape_(declared_shape),
      num_classes_(num_classes) {}

Label PlaybackOracle::top1(const Image& img) {
  if (!(shape_ == Shape{}) && !(img.shape() == shape_)) {
    throw ConfigError("playback: image shape mismatch");
  }
  const auto hash = content_hash(img);
  auto it = map_.find(hash);
  if (it == map_.end()) {
    throw MissingPredictionError("playback: no prediction for " + hash);
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// QueryCache / CachedOracle

QueryCache::QueryCache(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    map_ = load_log(path);
  }
  out_.open(path, std::ios::app);
  if (!out_) {
    throw IngestError("cache: cannot open " + path.string() +
                      " for appending");
  }
}

std::optional<Label> QueryCache::lookup(const std::string& hash) const {
  std::shared_lock lock(mu_);
  auto it = map_.find(hash);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void QueryCache::insert(const std::string& hash, Label label) {
  std::unique_lock lock(mu_);
  if (!map_.emplace(hash, label).second) return;  // already recorded
  if (out_.is_open()) {
    out_ << nlohmann::json{{"hash", hash}, {"label", label}}.dump() << '\n';
    out_.flush();
  }
}

std::size_t QueryCache::size() const {
  std::shared_lock lock(mu_);
  return map_.size();
}

Label CachedOracle::top1(const Image& img) {
  calls_.fetch_add(1, std::memory_order_relaxed);
  const auto hash = content_hash(img);
  if (auto hit = cache_.lookup(hash)) return *hit;
  misses_.fetch_add(1, std::memory_order_relaxed);
  const Label label = inner_.top1(img);
  cache_.insert(hash, label);
  return label;
}

}  // namespace qcal
