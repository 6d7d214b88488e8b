#pragma once

#include <filesystem>
#include <vector>

#include "qcal/image.hpp"
#include "qcal/oracle.hpp"

namespace qcal {

struct Dataset {
  std::vector<Image> images;
  std::vector<Label> labels;
  int num_classes = 0;
};

// 8-bit RGB PNG; pixels scale to [0,1] on read and quantize to the nearest
// 8-bit level on write (write requires 3 channels and values in [0,1]).
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Raw tensor files round-trip bit-exactly.
Image read_raw(const std::filesystem::path& path);
void write_raw(const std::filesystem::path& path, const Image& img);

// Directory with labels.csv (header filename,label) plus one .png or .bbct
// file per row. Every image must share one shape; labels must lie in
// [0, num_classes). Problems raise IngestError naming the offending entry.
Dataset load_dataset(const std::filesystem::path& dir, int num_classes);

enum class ImageFileFormat { png, raw };

// Writes labels.csv plus sample_%05d files. Raw keeps exact pixel values.
void save_dataset(const std::filesystem::path& dir, const Dataset& data,
                  ImageFileFormat format);

}  // namespace qcal
