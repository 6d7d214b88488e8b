#pragma once

#include <memory>
#include <semaphore>
#include <string>

#include "qcal/oracle.hpp"

namespace qcal {

// Client for the remote prediction protocol:
//   POST <endpoint>/predict
//   request  {"shape": [H, W, C], "pixels_b64": "<base64 of little-endian
//             float32 row-major pixels>"}
//   response {"label": <int>}
// Transport failures and 5xx/429 responses are retried up to max_retries
// times with exponential backoff, then raise OracleError. At most
// max_in_flight requests are outstanding at any moment, regardless of how
// many threads call in.
class HttpOracle final : public Oracle {
 public:
  struct Options {
    std::string endpoint;  // e.g. "http://127.0.0.1:8080"
    int timeout_ms = 5000;
    int max_retries = 3;
    int retry_backoff_ms = 100;
    int max_in_flight = 8;
    Shape shape{};       // all-zero = unknown, disables shape checking
    int num_classes = 0; // 0 = unknown, disables label range checking
  };

  explicit HttpOracle(Options opt);

  Label top1(const Image& img) override;
  Shape input_shape() const override { return opt_.shape; }
  int num_classes() const override { return opt_.num_classes; }

 private:
  Options opt_;
  std::counting_semaphore<> in_flight_;
};

}  // namespace qcal
