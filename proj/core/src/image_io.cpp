// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "splatfit/errors.hpp"

namespace splatfit {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

std::uint8_t quantize_unit(double v) {
  const double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

void save_png(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2 && !(image.rank() == 3 && image.dim(2) == 3)) {
    throw DimensionError("save_png expects H x W or H x W x 3, got " + shape_string(image.shape()));
  }
  const auto height = static_cast<png_uint_32>(image.dim(0));
  const auto width = static_cast<png_uint_32>(image.dim(1));
  const int channels = image.rank() == 3 ? 3 : 1;

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(width) * channels);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = quantize_unit(image[y * row.size() + i]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng read failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("only 8-bit gray/RGB PNG is supported: " + path.string());
  }
  const int channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  Tensor out = channels == 3 ? Tensor({height, width, 3}) : Tensor({height, width});
  std::vector<png_byte> row(static_cast<std::size_t>(width) * channels);
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t i = 0; i < row.size(); ++i) out[y * row.size() + i] = row[i] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

Tensor false_color(const Tensor& weights, double max_value) {
  if (weights.rank() != 2) throw DimensionError("false_color expects H x W");
  double m = max_value;
  if (m <= 0.0) {
    for (double v : weights.values()) m = std::max(m, v);
  }
  if (m <= 0.0) m = 1.0;
  Tensor out({weights.dim(0), weights.dim(1), 3});
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double t = std::clamp(weights[i] / m, 0.0, 1.0);
    out[3 * i] = t;
    out[3 * i + 1] = t * t;
    out[3 * i + 2] = 1.0 - t;
  }
  return out;
}

}  // namespace splatfit
