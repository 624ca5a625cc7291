#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "ordsr/image_io.hpp"
#include "ordsr/imaging.hpp"
#include "test_util.hpp"

namespace ordsr {
namespace {

using testing::data_dir;
using testing::random_plane;

Plane constant(std::size_t h, std::size_t w, double c) {
  Plane p(h, w);
  for (double& v : p.values()) v = c;
  return p;
}

TEST(CubicKernel, HalfPhaseWeights) {
  const auto w = cubic_weights(0.5);
  EXPECT_DOUBLE_EQ(w[0], -0.0625);
  EXPECT_DOUBLE_EQ(w[1], 0.5625);
  EXPECT_DOUBLE_EQ(w[2], 0.5625);
  EXPECT_DOUBLE_EQ(w[3], -0.0625);
}

TEST(CubicKernel, PartitionOfUnityAndLinearReproduction) {
  for (int k = 0; k <= 1000; ++k) {
    const double phase = k / 1000.0;
    const auto w = cubic_weights(phase);
    EXPECT_NEAR(w[0] + w[1] + w[2] + w[3], 1.0, 1e-14);
    // sample of the ramp f(t) = t at t = phase from taps -1, 0, 1, 2
    EXPECT_NEAR(-w[0] + w[2] + 2 * w[3], phase, 1e-14);
  }
  EXPECT_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_EQ(cubic_kernel(2.0), 0.0);
  EXPECT_EQ(cubic_kernel(-3.0), 0.0);
}

TEST(BicubicResize, ConstantStaysConstant) {
  const Plane c = constant(20, 17, 0.42);
  for (double f : {0.5, 0.7, 1.0 / 3.0, 2.0, 3.0}) {
    const Plane r = bicubic_scale(c, f);
    for (double v : r.values()) EXPECT_NEAR(v, 0.42, 1e-14) << f;
  }
}

TEST(BicubicResize, UnitFactorIsIdentity) {
  const Plane x = random_plane(13, 9, 1);
  EXPECT_EQ(bicubic_scale(x, 1.0), x);
}

TEST(BicubicResize, UpsampledRampIsLinearInTheInterior) {
  Plane ramp(1, 16);
  for (std::size_t c = 0; c < 16; ++c) ramp(0, c) = 0.05 * static_cast<double>(c);
  const Plane up = bicubic_resize(ramp, 1, 32);
  // output j sits at source position (j + 0.5) / 2 - 0.5
  for (std::size_t j = 4; j < 28; ++j) {
    const double pos = (static_cast<double>(j) + 0.5) / 2.0 - 0.5;
    EXPECT_NEAR(up(0, j), 0.05 * pos, 1e-14) << j;
  }
}

TEST(BicubicResize, OutputDims) {
  const Plane x = random_plane(100, 100, 2);
  const Plane s = bicubic_scale(x, 0.7);
  EXPECT_EQ(s.height(), 70u);
  EXPECT_EQ(s.width(), 70u);
  EXPECT_THROW(bicubic_resize(x, 0, 5), std::invalid_argument);
  EXPECT_THROW(bicubic_scale(x, -1.0), std::invalid_argument);
}

TEST(BicubicResize, AntialiasSuppressesNyquist) {
  Plane stripes(8, 48);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 48; ++c) stripes(r, c) = c % 2 == 0 ? 1.0 : 0.0;
  }
  const Plane aa = bicubic_resize(stripes, 8, 16, true);
  for (std::size_t c = 2; c < 14; ++c) EXPECT_NEAR(aa(4, c), 0.5, 0.05);
}

TEST(SampleBicubic, HitsGridPoints) {
  const Plane x = random_plane(6, 7, 3);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_NEAR(sample_bicubic(x, static_cast<double>(r), static_cast<double>(c)), x(r, c), 1e-15);
    }
  }
}

TEST(Color, WhiteAndGray) {
  const auto w = rgb_to_ycbcr(RgbPixel{1, 1, 1});
  EXPECT_NEAR(w.y, 1.0, 1e-15);
  EXPECT_NEAR(w.cb, 0.5, 1e-15);
  EXPECT_NEAR(w.cr, 0.5, 1e-15);
  for (double g = 0.0; g <= 1.0; g += 0.125) {
    const auto p = rgb_to_ycbcr(RgbPixel{g, g, g});
    EXPECT_NEAR(p.y, g, 1e-15);
    EXPECT_NEAR(p.cb, 0.5, 1e-15);
    EXPECT_NEAR(p.cr, 0.5, 1e-15);
  }
}

TEST(Color, RoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const RgbPixel p{rng.uniform(), rng.uniform(), rng.uniform()};
    const RgbPixel q = ycbcr_to_rgb(rgb_to_ycbcr(p));
    EXPECT_NEAR(p.r, q.r, 1e-12);
    EXPECT_NEAR(p.g, q.g, 1e-12);
    EXPECT_NEAR(p.b, q.b, 1e-12);
  }
}

TEST(Color, KnownPrimary) {
  const auto red = rgb_to_ycbcr(RgbPixel{1, 0, 0});
  EXPECT_NEAR(red.y, 0.299, 1e-15);
  EXPECT_NEAR(red.cr, 1.0, 1e-15);
  EXPECT_NEAR(red.cb, 0.5 - 0.168736, 1e-6);
}

TEST(Psnr, Basics) {
  const Plane a = random_plane(16, 16, 1);
  EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
  Plane b = a;
  for (double& v : b.values()) v += 0.1;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
  const Plane c = random_plane(16, 16, 2);
  EXPECT_EQ(psnr(a, c), psnr(c, a));
  EXPECT_THROW(psnr(a, random_plane(16, 15, 1)), std::invalid_argument);
}

TEST(Psnr, CropIgnoresBorder) {
  const Plane a = random_plane(16, 16, 1);
  Plane b = a;
  b(0, 0) += 0.5;
  b(15, 3) -= 0.5;
  EXPECT_EQ(psnr(a, b, 1), std::numeric_limits<double>::infinity());
  EXPECT_LT(psnr(a, b, 0), 40.0);
}

TEST(Ssim, Basics) {
  const Plane a = random_plane(24, 24, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  const Plane b = random_plane(24, 24, 2);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
  EXPECT_THROW(ssim(random_plane(10, 30, 1), random_plane(10, 30, 2)), std::invalid_argument);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
  Plane a(32, 32), b(32, 32);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 32; ++c) {
      a(r, c) = (r + c) % 2 == 0 ? 1.0 : 0.0;
      b(r, c) = 1.0 - a(r, c);
    }
  }
  EXPECT_LT(ssim(a, b), 0.0);
}

TEST(Metrics, MatchFrozenReferences) {
  std::ifstream in(data_dir() / "metrics" / "reference.json");
  const auto ref = nlohmann::json::parse(in);
  const Plane base = read_luma(data_dir() / "metrics" / "reference.png");
  ASSERT_EQ(ref["pairs"].size(), 5u);
  for (const auto& pair : ref["pairs"]) {
    const std::string name = pair["name"];
    const Plane other = read_luma(data_dir() / "metrics" / (name + ".png"));
    EXPECT_NEAR(psnr(base, other), pair["psnr"].get<double>(), 0.01) << name;
    EXPECT_NEAR(ssim(base, other), pair["ssim"].get<double>(), 0.001) << name;
  }
}

TEST(Quality, ReportJson) {
  const Plane a = random_plane(16, 16, 1);
  const QualityReport r = quality(a, a, 2);
  const auto j = r.to_json();
  EXPECT_TRUE(j["psnr"].is_null());
  EXPECT_EQ(j["crop"], 2);
  EXPECT_NEAR(j["ssim"].get<double>(), 1.0, 1e-12);
}

TEST(Spectrum, ConstantImageIsDcOnly) {
  const auto p = spectrum_profile(constant(32, 32, 0.5), dct_basis(8), 2);
  ASSERT_EQ(p.size(), 64u);
  EXPECT_NEAR(p[0], 4.0, 1e-12);
  for (std::size_t i = 1; i < 64; ++i) EXPECT_NEAR(p[i], 0.0, 1e-12);
}

TEST(Spectrum, WhiteNoiseIsFlat) {
  Rng rng(5);
  Plane noise(64, 64);
  for (double& v : noise.values()) v = rng.normal();
  const auto p = spectrum_profile(noise, dct_basis(8), 2);
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  EXPECT_LT(*hi / *lo, 10.0);
}

TEST(Spectrum, GapHelpers) {
  const std::vector<double> hr{1.0, 2.0, 4.0, 0.0};
  const std::vector<double> lr{1.0, 1.0, 1.0, 1.0};
  const auto log_gap = spectrum_log_gap(hr, lr);
  EXPECT_DOUBLE_EQ(log_gap[1], std::log(2.0));
  EXPECT_EQ(log_gap[3], 0.0);
  EXPECT_EQ(spectrum_abs_gap(hr, lr)[2], 3.0);
  EXPECT_DOUBLE_EQ(index_rank_correlation({1.0, 2.0, 3.0}), 1.0);
}

TEST(ImageIo, PngRoundTripGrayAndColor) {
  const auto path = testing::temp_path("io.png");
  Plane y = random_plane(9, 13, 1);
  for (double& v : y.values()) v = std::round(v * 255.0) / 255.0;
  write_image(path, gray_image(y));
  const Image back = read_image(path);
  ASSERT_EQ(back.channels.size(), 1u);
  EXPECT_EQ(back.channels[0], y);

  Image rgb;
  for (int k = 0; k < 3; ++k) rgb.channels.push_back(random_plane(5, 7, 10 + k));
  write_image(path, rgb, 16);
  const Image back16 = read_image(path);
  ASSERT_TRUE(back16.is_color());
  for (int k = 0; k < 3; ++k) {
    EXPECT_LT(testing::max_abs_diff(back16.channels[k], rgb.channels[k]), 0.5 / 65535 + 1e-12);
  }
  std::filesystem::remove(path);
}

TEST(ImageIo, NetpbmRoundTrip) {
  const auto pgm = testing::temp_path("io.pgm");
  Plane y = random_plane(6, 4, 2);
  for (double& v : y.values()) v = std::round(v * 255.0) / 255.0;
  write_image(pgm, gray_image(y));
  EXPECT_EQ(read_image(pgm).channels[0], y);
  const auto ppm = testing::temp_path("io.ppm");
  Image rgb;
  for (int k = 0; k < 3; ++k) rgb.channels.push_back(y);
  write_image(ppm, rgb, 16);
  EXPECT_LT(testing::max_abs_diff(read_image(ppm).channels[2], y), 1e-12);
  EXPECT_THROW(write_image(pgm, rgb), std::invalid_argument);
  std::filesystem::remove(pgm);
  std::filesystem::remove(ppm);
}

TEST(ImageIo, Fixtures) {
  const Image color = read_image(data_dir() / "color" / "coffee_crop.png");
  EXPECT_TRUE(color.is_color());
  EXPECT_EQ(color.height(), 64u);
  EXPECT_EQ(color.width(), 72u);
  const Plane luma = read_luma(data_dir() / "train" / "camera_0.png");
  EXPECT_EQ(luma.height(), 96u);
}

TEST(ImageIo, Errors) {
  EXPECT_THROW(read_image(testing::temp_path("missing.png")), std::runtime_error);
  EXPECT_THROW(read_image("image.bmp"), std::invalid_argument);
  const auto bad = testing::temp_path("bad.png");
  { std::ofstream(bad) << "not really a png"; }
  EXPECT_THROW(read_image(bad), std::runtime_error);
  std::filesystem::remove(bad);
}

}  // namespace
}  // namespace ordsr
