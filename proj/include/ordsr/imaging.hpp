#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordsr/plane.hpp"
#include "ordsr/transform_core.hpp"

namespace ordsr {

// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

// Weights of the four taps at offsets -1, 0, 1, 2 for a sample at
// fractional position `phase` in [0, 1).
std::array<double, 4> cubic_weights(double phase);

// Separable bicubic resize with pixel-centre alignment and edge clamping.
// When shrinking, the kernel is widened by the inverse scale so the result is
// antialiased (the usual imresize behaviour).
Plane bicubic_resize(const Plane& img, std::size_t out_height, std::size_t out_width,
                     bool antialias = true);
// Output dims round(H * factor) x round(W * factor).
Plane bicubic_scale(const Plane& img, double factor, bool antialias = true);

// Bicubic point sample at continuous (row, col), edges clamped.
double sample_bicubic(const Plane& img, double row, double col);

// Y, Cb, Cr planes in [0, 1] (full-range BT.601, chroma offset 0.5); a
// grayscale image carries only Y.
struct ColorImage {
  Plane y;
  Plane cb;
  Plane cr;

  bool is_color() const { return !cb.empty(); }
};

struct RgbPixel {
  double r, g, b;
};
struct YCbCrPixel {
  double y, cb, cr;
};

YCbCrPixel rgb_to_ycbcr(RgbPixel p);
RgbPixel ycbcr_to_rgb(YCbCrPixel p);

ColorImage rgb_to_ycbcr(const Plane& r, const Plane& g, const Plane& b);
std::array<Plane, 3> ycbcr_to_rgb(const ColorImage& img);

// 10 log10(1 / MSE) after dropping `crop` pixels on every side; +inf when the
// images agree exactly.
double psnr(const Plane& a, const Plane& b, std::size_t crop = 0);

// Mean SSIM over the positions where the 11x11 Gaussian window (sigma 1.5)
// fits, K1 = 0.01, K2 = 0.03, range 1. `crop` is applied first.
double ssim(const Plane& a, const Plane& b, std::size_t crop = 0);

struct QualityReport {
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t crop = 0;

  nlohmann::json to_json() const;
};

QualityReport quality(const Plane& result, const Plane& reference, std::size_t crop);

// Mean |coefficient| of every cube map, in bank index order.
std::vector<double> spectrum_profile(const Plane& img, const FilterBank& bank,
                                     int stride);

// Per-index log(profile_hr / profile_lr); indices where either profile is
// below `floor` get 0.
std::vector<double> spectrum_log_gap(const std::vector<double>& hr,
                                     const std::vector<double>& lr,
                                     double floor = 1e-12);
std::vector<double> spectrum_abs_gap(const std::vector<double>& hr,
                                     const std::vector<double>& lr);

// Spearman correlation between index (1..n) and a per-index series.
double index_rank_correlation(const std::vector<double>& series);

}  // namespace ordsr
