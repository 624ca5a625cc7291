#pragma once

#include <filesystem>
#include <vector>

#include "ordsr/imaging.hpp"
#include "ordsr/plane.hpp"

namespace ordsr {

// One (gray) or three (RGB) channels in [0, 1]. Alpha is dropped on read.
struct Image {
  std::vector<Plane> channels;

  std::size_t height() const { return channels.empty() ? 0 : channels[0].height(); }
  std::size_t width() const { return channels.empty() ? 0 : channels[0].width(); }
  bool is_color() const { return channels.size() == 3; }
};

// PNG (8/16-bit, any color type), binary PGM (P5) and PPM (P6).
Image read_image(const std::filesystem::path& path);
// Format chosen from the extension (.png, .pgm, .ppm). Values are clamped to
// [0, 1] and rounded to the nearest code.
void write_image(const std::filesystem::path& path, const Image& img, int bit_depth = 8);

Image gray_image(Plane y);
ColorImage to_ycbcr(const Image& img);
Image from_ycbcr(const ColorImage& img);

// Luma of an image: the single channel, or Y of RGB.
Plane read_luma(const std::filesystem::path& path);

}  // namespace ordsr
