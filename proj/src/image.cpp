#include "qcal/image.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "qcal/errors.hpp"

namespace qcal {

namespace {

constexpr std::uint8_t kMagic[4] = {'B', 'B', 'C', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> to_raw_bytes(const Image& img) {
  std::vector<std::uint8_t> out;
  out.reserve(20 + img.data.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(img.height));
  put_u32(out, static_cast<std::uint32_t>(img.width));
  put_u32(out, static_cast<std::uint32_t>(img.channels));
  for (float v : img.data) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Image from_raw_bytes(const std::uint8_t* bytes, std::size_t len) {
  if (len < 20 || std::memcmp(bytes, kMagic, 4) != 0) {
    throw IngestError("raw tensor: missing BBCT magic");
  }
  if (get_u32(bytes + 4) != kVersion) {
    throw IngestError("raw tensor: unsupported version " +
                      std::to_string(get_u32(bytes + 4)));
  }
  const std::uint32_t h = get_u32(bytes + 8);
  const std::uint32_t w = get_u32(bytes + 12);
  const std::uint32_t c = get_u32(bytes + 16);
  if (h == 0 || w == 0 || c == 0 || 1ULL * h * w * c > (1ULL << 31)) {
    throw IngestError("raw tensor: bad dimensions");
  }
  const std::size_t count = std::size_t{h} * w * c;
  if (len != 20 + count * 4) {
    throw IngestError("raw tensor: length does not match dimensions");
  }
  Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (std::size_t i = 0; i < count; ++i) {
    float v = std::bit_cast<float>(get_u32(bytes + 20 + i * 4));
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw IngestError("raw tensor: pixel " + std::to_string(i) +
                        " outside [0,1]");
    }
    img.data[i] = v;
  }
  return img;
}

Image from_raw_bytes(const std::vector<std::uint8_t>& bytes) {
  return from_raw_bytes(bytes.data(), bytes.size());
}

}  // namespace qcal
