#include "qcal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <png.h>

#include "qcal/errors.hpp"

namespace qcal {

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    throw IngestError("png read failed: " + path.string() + ": " +
                      png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IngestError("png read failed: " + path.string() + ": " + msg);
  }
  Image img(static_cast<int>(png.height), static_cast<int>(png.width), 3);
  for (std::size_t i = 0; i < buf.size(); ++i)
    img.data[i] = static_cast<float>(buf[i]) / 255.0f;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3)
    throw IngestError("png write needs 3 channels: " + path.string());
  if (img.height < 1 || img.width < 1)
    throw IngestError("png write: empty image: " + path.string());
  std::vector<std::uint8_t> buf(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    float v = img.data[i];
    if (!(v >= 0.0f && v <= 1.0f))
      throw IngestError("png write: pixel outside [0,1]: " + path.string());
    buf[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0,
                               nullptr))
    throw IngestError("png write failed: " + path.string() + ": " +
                      png.message);
}

Image read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return from_raw_bytes(bytes);
  } catch (const IngestError& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
}

void write_raw(const std::filesystem::path& path, const Image& img) {
  auto bytes = to_raw_bytes(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot write: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& dir, int num_classes) {
  if (num_classes < 2) throw ConfigError("dataset: need num_classes >= 2");
  auto csv_path = dir / "labels.csv";
  std::ifstream in(csv_path);
  if (!in) throw IngestError("missing labels.csv in " + dir.string());
  std::string line;
  if (!std::getline(in, line))
    throw IngestError("empty labels.csv in " + dir.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "filename,label")
    throw IngestError("labels.csv: expected header filename,label in " +
                      dir.string());

  Dataset data;
  data.num_classes = num_classes;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0)
      throw IngestError("labels.csv line " + std::to_string(line_no) +
                        ": expected filename,label");
    std::string name = line.substr(0, comma);
    std::string label_text = line.substr(comma + 1);
    int label = 0;
    try {
      std::size_t pos = 0;
      label = std::stoi(label_text, &pos);
      if (pos != label_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw IngestError("labels.csv line " + std::to_string(line_no) +
                        ": bad label for " + name);
    }
    if (label < 0 || label >= num_classes)
      throw IngestError("label out of range for " + name + ": " +
                        std::to_string(label));
    auto file = dir / name;
    Image img;
    auto ext = file.extension().string();
    if (ext == ".png")
      img = read_png(file);
    else if (ext == ".bbct")
      img = read_raw(file);
    else
      throw IngestError("unsupported image format for " + name);
    if (!data.images.empty() && !(img.shape() == data.images.front().shape()))
      throw IngestError("shape mismatch for " + name);
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  if (data.images.empty())
    throw IngestError("labels.csv lists no samples in " + dir.string());
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data,
                  ImageFileFormat format) {
  if (data.images.size() != data.labels.size())
    throw IngestError("dataset: image/label count mismatch");
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "filename,label\n";
  const char* ext = (format == ImageFileFormat::png) ? "png" : "bbct";
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.%s", i, ext);
    if (format == ImageFileFormat::png)
      write_png(dir / name, data.images[i]);
    else
      write_raw(dir / name, data.images[i]);
    csv << name << ',' << data.labels[i] << '\n';
  }
  std::ofstream out(dir / "labels.csv", std::ios::trunc);
  if (!out) throw IngestError("cannot write labels.csv in " + dir.string());
  out << csv.str();
  if (!out) throw IngestError("write failed: labels.csv in " + dir.string());
}

}  // namespace qcal
