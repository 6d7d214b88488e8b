#include "qcal/http_oracle.hpp"

#include <bit>
#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "qcal/errors.hpp"

namespace qcal {

HttpOracle::HttpOracle(Options opt)
    : opt_(std::move(opt)),
      in_flight_(std::max(1, opt_.max_in_flight)) {
  if (opt_.endpoint.empty()) {
    throw ConfigError("http oracle: endpoint must be set");
  }
  if (opt_.timeout_ms <= 0 || opt_.max_retries < 0) {
    throw ConfigError("http oracle: bad timeout or retry count");
  }
}

Label HttpOracle::top1(const Image& img) {
  if (!(opt_.shape == Shape{}) && !(img.shape() == opt_.shape)) {
    throw ConfigError("http oracle: image shape mismatch");
  }

  std::vector<std::uint8_t> pixels;
  pixels.reserve(img.data.size() * 4);
  for (float v : img.data) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    pixels.push_back(static_cast<std::uint8_t>(u));
    pixels.push_back(static_cast<std::uint8_t>(u >> 8));
    pixels.push_back(static_cast<std::uint8_t>(u >> 16));
    pixels.push_back(static_cast<std::uint8_t>(u >> 24));
  }
  nlohmann::json request{
      {"shape", {img.height, img.width, img.channels}},
      {"pixels_b64", base64_encode(pixels.data(), pixels.size())}};
  const std::string body = request.dump();

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& sem;
    ~Release() { sem.release(); }
  } release{in_flight_};

  std::string last_error;
  for (int attempt = 0; attempt <= opt_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(
          opt_.retry_backoff_ms * (1 << (attempt - 1))));
    }
    // One connection per request keeps concurrent callers independent.
    httplib::Client client(opt_.endpoint);
    client.set_connection_timeout(opt_.timeout_ms / 1000,
                                  opt_.timeout_ms % 1000 * 1000);
    client.set_read_timeout(opt_.timeout_ms / 1000,
                            opt_.timeout_ms % 1000 * 1000);

    auto res = client.Post("/predict", body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw OracleError("http oracle: status " + std::to_string(res->status));
    }
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() ||
        !reply.contains("label") ||
        !reply.at("label").is_number_integer()) {
      throw OracleError("http oracle: malformed response body");
    }
    const Label label = reply.at("label").get<Label>();
    if (label < 0 || (opt_.num_classes > 0 && label >= opt_.num_classes)) {
      throw OracleError("http oracle: label " + std::to_string(label) +
                        " out of range");
    }
    return label;
  }
  throw OracleError("http oracle: retries exhausted (" + last_error + ")");
}

}  // namespace qcal
