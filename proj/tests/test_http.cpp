#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include "qcal/errors.hpp"
#include "qcal/http_oracle.hpp"
#include "qcal/rng.hpp"

using qcal::HttpOracle;
using qcal::Image;
using qcal::Shape;

namespace {

Image random_image(Shape shape, std::uint64_t seed) {
  qcal::CounterRng rng(seed);
  Image img(shape.height, shape.width, shape.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = static_cast<float>(rng.uniform(i));
  }
  return img;
}

// In-process server bound to an ephemeral port; stops on destruction.
struct StubServer {
  httplib::Server server;
  int port = 0;
  std::thread worker;

  explicit StubServer(httplib::Server::Handler handler) {
    server.Post("/predict", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    worker = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    worker.join();
  }
  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port);
  }
};

HttpOracle::Options base_options(const StubServer& stub) {
  HttpOracle::Options opt;
  opt.endpoint = stub.endpoint();
  opt.timeout_ms = 5000;
  opt.max_retries = 3;
  opt.retry_backoff_ms = 1;
  return opt;
}

}  // namespace

TEST_CASE("http oracle speaks the request protocol") {
  std::string seen_body;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content("{\"label\": 5}", "application/json");
  });
  HttpOracle oracle(base_options(stub));
  Image img = random_image({2, 3, 1}, 44);
  CHECK(oracle.top1(img) == 5);

  auto req = nlohmann::json::parse(seen_body);
  CHECK(req.at("shape") == nlohmann::json({2, 3, 1}));
  auto pixels = qcal::base64_decode(req.at("pixels_b64").get<std::string>());
  REQUIRE(pixels.size() == img.data.size() * 4);
  // little-endian float32 payload, row-major
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    float v;
    std::memcpy(&v, pixels.data() + 4 * i, 4);
    CHECK(v == img.data[i]);
  }
}

TEST_CASE("http oracle retries transient failures") {
  std::atomic<int> attempts{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    int n = ++attempts;
    if (n <= 2) {
      res.status = n == 1 ? 500 : 429;
      return;
    }
    res.set_content("{\"label\": 1}", "application/json");
  });
  HttpOracle oracle(base_options(stub));
  CHECK(oracle.top1(random_image({1, 1, 1}, 1)) == 1);
  CHECK(attempts.load() == 3);
}

TEST_CASE("http oracle gives up after max retries") {
  std::atomic<int> attempts{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 503;
  });
  auto opt = base_options(stub);
  opt.max_retries = 2;
  HttpOracle oracle(opt);
  CHECK_THROWS_AS(oracle.top1(random_image({1, 1, 1}, 2)), qcal::OracleError);
  CHECK(attempts.load() == 3);  // initial try + 2 retries
}

TEST_CASE("http oracle fails fast on non-retryable statuses") {
  std::atomic<int> attempts{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 404;
  });
  HttpOracle oracle(base_options(stub));
  CHECK_THROWS_AS(oracle.top1(random_image({1, 1, 1}, 3)), qcal::OracleError);
  CHECK(attempts.load() == 1);
}

TEST_CASE("http oracle rejects malformed and out-of-range responses") {
  std::string payload;
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(payload, "application/json");
  });
  auto opt = base_options(stub);
  opt.num_classes = 4;
  HttpOracle oracle(opt);
  Image img = random_image({1, 1, 1}, 4);

  payload = "not json";
  CHECK_THROWS_AS(oracle.top1(img), qcal::OracleError);
  payload = "{\"wrong\": 1}";
  CHECK_THROWS_AS(oracle.top1(img), qcal::OracleError);
  payload = "{\"label\": 1.5}";
  CHECK_THROWS_AS(oracle.top1(img), qcal::OracleError);
  payload = "{\"label\": 4}";
  CHECK_THROWS_AS(oracle.top1(img), qcal::OracleError);
  payload = "{\"label\": -1}";
  CHECK_THROWS_AS(oracle.top1(img), qcal::OracleError);
  payload = "{\"label\": 3}";
  CHECK(oracle.top1(img) == 3);
}

TEST_CASE("http oracle validates the image shape client-side") {
  std::atomic<int> attempts{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.set_content("{\"label\": 0}", "application/json");
  });
  auto opt = base_options(stub);
  opt.shape = {4, 4, 3};
  HttpOracle oracle(opt);
  CHECK_THROWS_AS(oracle.top1(random_image({4, 4, 1}, 5)), qcal::ConfigError);
  CHECK(attempts.load() == 0);
  CHECK(oracle.top1(random_image({4, 4, 3}, 6)) == 0);
}

TEST_CASE("http oracle caps concurrent requests") {
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --active;
    res.set_content("{\"label\": 2}", "application/json");
  });
  auto opt = base_options(stub);
  opt.max_in_flight = 2;
  HttpOracle oracle(opt);

  std::vector<std::thread> callers;
  std::atomic<int> ok{0};
  for (int t = 0; t < 8; ++t) {
    callers.emplace_back([&, t] {
      if (oracle.top1(random_image({1, 1, 1}, 10 + t)) == 2) ++ok;
    });
  }
  for (auto& th : callers) th.join();
  CHECK(ok.load() == 8);
  CHECK(peak.load() <= 2);
}

TEST_CASE("http oracle option validation") {
  HttpOracle::Options blank;
  CHECK_THROWS_AS(HttpOracle{blank}, qcal::ConfigError);
  HttpOracle::Options opt;
  opt.endpoint = "http://127.0.0.1:1";
  opt.timeout_ms = 0;
  CHECK_THROWS_AS(HttpOracle{opt}, qcal::ConfigError);
}
