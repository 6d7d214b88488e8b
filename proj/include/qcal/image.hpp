#pragma once

#include <cstdint>
#include <vector>

namespace qcal {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;
  bool operator==(const Shape&) const = default;
  long long count() const {
    return 1LL * height * width * channels;
  }
};

// Dense float tensor, row-major H x W x C, values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, 0.0f) {}

  Shape shape() const { return {height, width, channels}; }
  std::size_t size() const { return data.size(); }

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Self-contained binary serialization: magic "BBCT", u32 version (=1),
// u32 height, u32 width, u32 channels, then height*width*channels
// little-endian float32 values in row-major order. These bytes are also
// what the content hash and the HTTP payload are built from.
std::vector<std::uint8_t> to_raw_bytes(const Image& img);

// Parses and validates the format above, including the [0,1] pixel range.
// Throws IngestError on any violation.
Image from_raw_bytes(const std::uint8_t* bytes, std::size_t len);
Image from_raw_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace qcal
