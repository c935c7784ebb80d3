// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nerfaug {

// H x W x C image with values in [0, 1] plus a per-pixel alpha.
// Values are interleaved row-major: values[(y * width + x) * channels + c].
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> values;
  std::vector<double> alpha;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, double fill = 0.0, double alpha_fill = 0.0);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  double& at(int x, int y, int c = 0) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  // Clamps values and alpha to [0, 1]; throws NumericalError on NaN/inf.
  void clamp01();
  bool operator==(const ImageBuffer&) const = default;
};

// luma = 0.299 r + 0.587 g + 0.114 b. A 1-channel input is returned as is.
ImageBuffer to_grayscale(const ImageBuffer& img);

// Replicates a 1-channel image into 3 channels.
ImageBuffer gray_to_rgb(const ImageBuffer& img);

// Box-filter downsampling by an integer factor (width and height must divide).
ImageBuffer downsample(const ImageBuffer& img, int factor);

// 8-bit quantization with rounding half-up.
std::uint8_t to_u8(double v);

// Writes 8-bit grayscale (1 channel) or RGB (3 channels) PNG. Throws DataError with the path.
void write_png(const ImageBuffer& img, const std::filesystem::path& path);
// Writes the alpha channel as an 8-bit grayscale PNG.
void write_alpha_png(const ImageBuffer& img, const std::filesystem::path& path);
// Reads an 8-bit gray/gray+alpha/RGB/RGBA PNG. Alpha is 1 when the file has none.
ImageBuffer read_png(const std::filesystem::path& path);

double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace nerfaug
