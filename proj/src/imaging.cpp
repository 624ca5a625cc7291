#include "ordsr/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ordsr/cdct_layer.hpp"
#include "ordsr/stats.hpp"

namespace ordsr {

namespace {

constexpr double kA = -0.5;

// BT.601 luma weights.
constexpr double kKr = 0.299;
constexpr double kKb = 0.114;
constexpr double kKg = 1.0 - kKr - kKb;

struct Taps {
  std::ptrdiff_t first = 0;
  std::vector<double> weights;
};

std::vector<Taps> resize_taps(std::size_t in, std::size_t out, bool antialias) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const bool widen = antialias && scale < 1.0;
  const double support = widen ? 2.0 / scale : 2.0;
  std::vector<Taps> taps(out);
  for (std::size_t j = 0; j < out; ++j) {
    const double center = (static_cast<double>(j) + 0.5) / scale - 0.5;
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - support)) + 1;
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(center + support));
    Taps& t = taps[j];
    t.first = lo;
    double sum = 0.0;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double d = center - static_cast<double>(i);
      const double w = widen ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
      t.weights.push_back(w);
      sum += w;
    }
    for (double& w : t.weights) w /= sum;
  }
  return taps;
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

void require_same(const Plane& a, const Plane& b) {
  if (!a.same_dims(b)) throw std::invalid_argument("image dims differ");
}

Plane crop_border(const Plane& p, std::size_t crop) {
  if (crop == 0) return p;
  if (2 * crop >= p.height() || 2 * crop >= p.width()) {
    throw std::invalid_argument("border crop leaves no pixels");
  }
  Plane out(p.height() - 2 * crop, p.width() - 2 * crop);
  for (std::size_t r = 0; r < out.height(); ++r) {
    for (std::size_t c = 0; c < out.width(); ++c) out(r, c) = p(r + crop, c + crop);
  }
  return out;
}

std::vector<double> gaussian_window(int radius, double sigma) {
  std::vector<double> w;
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    w.push_back(std::exp(-0.5 * i * i / (sigma * sigma)));
    sum += w.back();
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-region separable filtering.
Plane filter_valid(const Plane& p, const std::vector<double>& w) {
  const std::size_t k = w.size();
  const std::size_t h = p.height() - k + 1;
  const std::size_t wd = p.width() - k + 1;
  Plane rows(p.height(), wd);
  for (std::size_t r = 0; r < p.height(); ++r) {
    for (std::size_t c = 0; c < wd; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += w[t] * p(r, c + t);
      rows(r, c) = s;
    }
  }
  Plane out(h, wd);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < wd; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += w[t] * rows(r + t, c);
      out(r, c) = s;
    }
  }
  return out;
}

}  // namespace

double cubic_kernel(double x) {
  const double t = std::abs(x);
  if (t <= 1.0) return ((kA + 2.0) * t - (kA + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((kA * t - 5.0 * kA) * t + 8.0 * kA) * t - 4.0 * kA;
  return 0.0;
}

std::array<double, 4> cubic_weights(double phase) {
  return {cubic_kernel(phase + 1.0), cubic_kernel(phase), cubic_kernel(1.0 - phase),
          cubic_kernel(2.0 - phase)};
}

Plane bicubic_resize(const Plane& img, std::size_t out_height, std::size_t out_width,
                     bool antialias) {
  if (img.empty()) throw std::invalid_argument("cannot resize an empty image");
  if (out_height == 0 || out_width == 0) {
    throw std::invalid_argument("target dims must be positive");
  }
  const auto col_taps = resize_taps(img.width(), out_width, antialias);
  const auto row_taps = resize_taps(img.height(), out_height, antialias);

  Plane horiz(img.height(), out_width);
  for (std::size_t r = 0; r < img.height(); ++r) {
    const double* src = img.row(r);
    for (std::size_t c = 0; c < out_width; ++c) {
      const Taps& t = col_taps[c];
      double s = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k) {
        s += t.weights[k] * src[clamp_index(t.first + static_cast<std::ptrdiff_t>(k), img.width())];
      }
      horiz(r, c) = s;
    }
  }
  Plane out(out_height, out_width);
  for (std::size_t r = 0; r < out_height; ++r) {
    const Taps& t = row_taps[r];
    for (std::size_t k = 0; k < t.weights.size(); ++k) {
      const double w = t.weights[k];
      const double* src =
          horiz.row(clamp_index(t.first + static_cast<std::ptrdiff_t>(k), img.height()));
      for (std::size_t c = 0; c < out_width; ++c) out(r, c) += w * src[c];
    }
  }
  return out;
}

Plane bicubic_scale(const Plane& img, double factor, bool antialias) {
  if (!(factor > 0.0)) throw std::invalid_argument("resize factor must be positive");
  const auto h = static_cast<std::size_t>(std::lround(static_cast<double>(img.height()) * factor));
  const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(img.width()) * factor));
  return bicubic_resize(img, h, w, antialias);
}

double sample_bicubic(const Plane& img, double row, double col) {
  const double fr = std::floor(row);
  const double fc = std::floor(col);
  const auto wr = cubic_weights(row - fr);
  const auto wc = cubic_weights(col - fc);
  const auto r0 = static_cast<std::ptrdiff_t>(fr) - 1;
  const auto c0 = static_cast<std::ptrdiff_t>(fc) - 1;
  double s = 0.0;
  for (std::ptrdiff_t i = 0; i < 4; ++i) {
    const double* src = img.row(clamp_index(r0 + i, img.height()));
    double line = 0.0;
    for (std::ptrdiff_t j = 0; j < 4; ++j) {
      line += wc[static_cast<std::size_t>(j)] * src[clamp_index(c0 + j, img.width())];
    }
    s += wr[static_cast<std::size_t>(i)] * line;
  }
  return s;
}

YCbCrPixel rgb_to_ycbcr(RgbPixel p) {
  const double y = kKr * p.r + kKg * p.g + kKb * p.b;
  return {y, 0.5 + (p.b - y) / (2.0 * (1.0 - kKb)), 0.5 + (p.r - y) / (2.0 * (1.0 - kKr))};
}

RgbPixel ycbcr_to_rgb(YCbCrPixel p) {
  const double r = p.y + 2.0 * (1.0 - kKr) * (p.cr - 0.5);
  const double b = p.y + 2.0 * (1.0 - kKb) * (p.cb - 0.5);
  return {r, (p.y - kKr * r - kKb * b) / kKg, b};
}

ColorImage rgb_to_ycbcr(const Plane& r, const Plane& g, const Plane& b) {
  require_same(r, g);
  require_same(r, b);
  ColorImage out{Plane(r.height(), r.width()), Plane(r.height(), r.width()),
                 Plane(r.height(), r.width())};
  for (std::size_t e = 0; e < r.size(); ++e) {
    const auto p = rgb_to_ycbcr({r.values()[e], g.values()[e], b.values()[e]});
    out.y.values()[e] = p.y;
    out.cb.values()[e] = p.cb;
    out.cr.values()[e] = p.cr;
  }
  return out;
}

std::array<Plane, 3> ycbcr_to_rgb(const ColorImage& img) {
  if (!img.is_color()) throw std::invalid_argument("image has no chroma planes");
  require_same(img.y, img.cb);
  require_same(img.y, img.cr);
  std::array<Plane, 3> out{Plane(img.y.height(), img.y.width()),
                           Plane(img.y.height(), img.y.width()),
                           Plane(img.y.height(), img.y.width())};
  for (std::size_t e = 0; e < img.y.size(); ++e) {
    const auto p = ycbcr_to_rgb({img.y.values()[e], img.cb.values()[e], img.cr.values()[e]});
    out[0].values()[e] = p.r;
    out[1].values()[e] = p.g;
    out[2].values()[e] = p.b;
  }
  return out;
}

double psnr(const Plane& a, const Plane& b, std::size_t crop) {
  require_same(a, b);
  const Plane ca = crop_border(a, crop);
  const Plane cb = crop_border(b, crop);
  double s = 0.0;
  for (std::size_t e = 0; e < ca.size(); ++e) {
    const double d = ca.values()[e] - cb.values()[e];
    s += d * d;
  }
  if (s == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(ca.size()) / s);
}

double ssim(const Plane& a, const Plane& b, std::size_t crop) {
  require_same(a, b);
  const Plane ca = crop_border(a, crop);
  const Plane cb = crop_border(b, crop);
  if (ca.height() < 11 || ca.width() < 11) {
    throw std::invalid_argument("ssim needs at least 11x11 pixels");
  }
  const auto w = gaussian_window(5, 1.5);
  Plane aa(ca.height(), ca.width()), bb(ca.height(), ca.width()), ab(ca.height(), ca.width());
  for (std::size_t e = 0; e < ca.size(); ++e) {
    const double x = ca.values()[e], y = cb.values()[e];
    aa.values()[e] = x * x;
    bb.values()[e] = y * y;
    ab.values()[e] = x * y;
  }
  const Plane mu_a = filter_valid(ca, w);
  const Plane mu_b = filter_valid(cb, w);
  const Plane e_aa = filter_valid(aa, w);
  const Plane e_bb = filter_valid(bb, w);
  const Plane e_ab = filter_valid(ab, w);
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t e = 0; e < mu_a.size(); ++e) {
    const double ma = mu_a.values()[e], mb = mu_b.values()[e];
    const double va = e_aa.values()[e] - ma * ma;
    const double vb = e_bb.values()[e] - mb * mb;
    const double cov = e_ab.values()[e] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

nlohmann::json QualityReport::to_json() const {
  nlohmann::json j;
  // JSON has no infinity; identical images report null
  j["psnr"] = std::isfinite(psnr) ? nlohmann::json(psnr) : nlohmann::json(nullptr);
  j["ssim"] = ssim;
  j["crop"] = crop;
  return j;
}

QualityReport quality(const Plane& result, const Plane& reference, std::size_t crop) {
  return {psnr(result, reference, crop), ssim(result, reference, crop), crop};
}

std::vector<double> spectrum_profile(const Plane& img, const FilterBank& bank,
                                     int stride) {
  const auto s = static_cast<std::size_t>(stride);
  Plane x = img;
  if (img.height() % s != 0 || img.width() % s != 0) {
    x = Plane(img.height() / s * s, img.width() / s * s);
    for (std::size_t r = 0; r < x.height(); ++r) {
      for (std::size_t c = 0; c < x.width(); ++c) x(r, c) = img(r, c);
    }
  }
  const DctCube cube = cdct_forward(x, bank, stride);
  std::vector<double> profile;
  for (std::size_t k = 0; k < cube.map_count(); ++k) {
    double sum = 0.0;
    for (double v : cube.map(k)) sum += std::abs(v);
    profile.push_back(sum / static_cast<double>(cube.map_size()));
  }
  return profile;
}

std::vector<double> spectrum_log_gap(const std::vector<double>& hr,
                                     const std::vector<double>& lr, double floor) {
  if (hr.size() != lr.size()) throw std::invalid_argument("profile lengths differ");
  std::vector<double> gap(hr.size(), 0.0);
  for (std::size_t i = 0; i < hr.size(); ++i) {
    if (hr[i] > floor && lr[i] > floor) gap[i] = std::log(hr[i] / lr[i]);
  }
  return gap;
}

std::vector<double> spectrum_abs_gap(const std::vector<double>& hr,
                                     const std::vector<double>& lr) {
  if (hr.size() != lr.size()) throw std::invalid_argument("profile lengths differ");
  std::vector<double> gap(hr.size());
  for (std::size_t i = 0; i < hr.size(); ++i) gap[i] = std::abs(hr[i] - lr[i]);
  return gap;
}

double index_rank_correlation(const std::vector<double>& series) {
  std::vector<double> idx(series.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i + 1);
  return spearman(idx, series);
}

}  // namespace ordsr
