#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dtjrd {

/// 8-bit interleaved image (1 or 3 channels).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_size(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool operator==(const Image&) const = default;
};

/// Reads PNG (8-bit gray/RGB/RGBA; alpha dropped) or binary PPM/PGM.
Image load_image(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);
/// Binary P6 (3 channels) or P5 (1 channel).
void save_pnm(const Image& image, const std::filesystem::path& path);
/// Dispatches on extension (.png, .ppm/.pgm).
void save_image(const Image& image, const std::filesystem::path& path);

/// Pixel rectangle [x0, x1) x [y0, y1), clamped to the image.
Image crop(const Image& image, int x0, int y0, int x1, int y1);
Image flip_horizontal(const Image& image);

}  // namespace dtjrd
