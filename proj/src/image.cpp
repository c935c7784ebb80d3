// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <fmt/core.h>
#include <png.h>

#include "nerfaug/error.hpp"

namespace nerfaug {

ImageBuffer::ImageBuffer(int w, int h, int c, double fill, double alpha_fill)
    : width(w),
      height(h),
      channels(c),
      values(static_cast<std::size_t>(w) * h * c, fill),
      alpha(static_cast<std::size_t>(w) * h, alpha_fill) {}

void ImageBuffer::clamp01() {
  for (double& v : values) {
    if (!std::isfinite(v)) throw NumericalError("non-finite pixel value");
    v = std::clamp(v, 0.0, 1.0);
  }
  for (double& a : alpha) {
    if (!std::isfinite(a)) throw NumericalError("non-finite alpha value");
    a = std::clamp(a, 0.0, 1.0);
  }
}

ImageBuffer to_grayscale(const ImageBuffer& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw DataError(fmt::format("to_grayscale expects 3 channels, got {}", img.channels));
  ImageBuffer out(img.width, img.height, 1);
  out.alpha = img.alpha;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double* p = &img.values[i * 3];
    out.values[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return out;
}

ImageBuffer gray_to_rgb(const ImageBuffer& img) {
  if (img.channels == 3) return img;
  ImageBuffer out(img.width, img.height, 3);
  out.alpha = img.alpha;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) out.values[i * 3 + c] = img.values[i];
  }
  return out;
}

ImageBuffer downsample(const ImageBuffer& img, int factor) {
  if (factor < 1 || img.width % factor != 0 || img.height % factor != 0) {
    throw ConfigError(fmt::format("cannot downsample {}x{} by {}", img.width, img.height, factor));
  }
  if (factor == 1) return img;
  ImageBuffer out(img.width / factor, img.height / factor, img.channels);
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double a = 0.0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          a += img.alpha[static_cast<std::size_t>(y * factor + dy) * img.width + x * factor + dx];
        }
      }
      out.alpha[static_cast<std::size_t>(y) * out.width + x] = a * norm;
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) s += img.at(x * factor + dx, y * factor + dy, c);
        }
        out.at(x, y, c) = s * norm;
      }
    }
  }
  return out;
}

std::uint8_t to_u8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_bytes(const std::vector<std::uint8_t>& bytes, int width, int height, int channels,
                     const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError(fmt::format("libpng initialization failed for '{}'", path.string()));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError(fmt::format("failed writing PNG '{}'", path.string()));
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(&bytes[static_cast<std::size_t>(y) * width * channels]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const ImageBuffer& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw DataError(fmt::format("PNG export supports 1 or 3 channels, got {} for '{}'", img.channels, path.string()));
  }
  std::vector<std::uint8_t> bytes(img.values.size());
  std::transform(img.values.begin(), img.values.end(), bytes.begin(), to_u8);
  write_png_bytes(bytes, img.width, img.height, img.channels, path);
}

void write_alpha_png(const ImageBuffer& img, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(img.alpha.size());
  std::transform(img.alpha.begin(), img.alpha.end(), bytes.begin(), to_u8);
  write_png_bytes(bytes, img.width, img.height, 1, path);
}

ImageBuffer read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError(fmt::format("cannot open image '{}'", path.string()));
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(fmt::format("libpng initialization failed for '{}'", path.string()));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(fmt::format("failed reading PNG '{}'", path.string()));
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_expand(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int file_channels = png_get_channels(png, info);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * file_channels);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = &bytes[static_cast<std::size_t>(y) * width * file_channels];
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const bool has_alpha = file_channels == 2 || file_channels == 4;
  const int color_channels = has_alpha ? file_channels - 1 : file_channels;
  ImageBuffer img(width, height, color_channels, 0.0, 1.0);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < color_channels; ++c) img.values[i * color_channels + c] = bytes[i * file_channels + c] / 255.0;
    if (has_alpha) img.alpha[i] = bytes[i * file_channels + color_channels] / 255.0;
  }
  return img;
}

double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw DataError(fmt::format("image shape mismatch: {}x{}x{} vs {}x{}x{}", a.width, a.height, a.channels, b.width,
                                b.height, b.channels));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return a.values.empty() ? 0.0 : s / static_cast<double>(a.values.size());
}

}  // namespace nerfaug
