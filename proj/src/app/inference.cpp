#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "app.hpp"
#include "ordsr/trainer.hpp"

namespace ordsr::app {

namespace {

// Mirror index without repeating the edge sample (numpy "reflect").
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

std::size_t padded_length(std::size_t len, std::size_t margin, std::size_t n, std::size_t s) {
  std::size_t total = std::max(len + 2 * margin, n);
  return (total + s - 1) / s * s;
}

Plane flip_transpose(const Plane& img, int k, bool inverse) {
  // k in [0, 8): rotation by (k % 4) quarter turns, vertical flip first when k >= 4
  Plane out = img;
  const int turns = k % 4;
  if (!inverse) {
    if (k >= 4) out = flip_vertical(out);
    for (int t = 0; t < turns; ++t) out = rotate90(out);
  } else {
    for (int t = 0; t < (4 - turns) % 4; ++t) out = rotate90(out);
    if (k >= 4) out = flip_vertical(out);
  }
  return out;
}

}  // namespace

Plane infer_luma(const Network& net, const Plane& x, std::size_t margin) {
  if (x.empty()) throw std::invalid_argument("empty input image");
  const auto n = static_cast<std::size_t>(net.n());
  const auto s = static_cast<std::size_t>(net.stride);
  const std::size_t ph = padded_length(x.height(), margin, n, s);
  const std::size_t pw = padded_length(x.width(), margin, n, s);
  const auto top = static_cast<std::ptrdiff_t>(margin);
  const auto left = static_cast<std::ptrdiff_t>(margin);
  Plane padded(ph, pw);
  for (std::size_t r = 0; r < ph; ++r) {
    const double* src = x.row(reflect(static_cast<std::ptrdiff_t>(r) - top, x.height()));
    for (std::size_t c = 0; c < pw; ++c) {
      padded(r, c) = src[reflect(static_cast<std::ptrdiff_t>(c) - left, x.width())];
    }
  }
  const Plane y = network_forward(net, padded);
  Plane out(x.height(), x.width());
  for (std::size_t r = 0; r < x.height(); ++r) {
    std::copy(y.row(r + margin) + margin, y.row(r + margin) + margin + x.width(), out.row(r));
  }
  return out;
}

Plane self_ensemble(const Network& net, const Plane& x, std::size_t margin) {
  std::vector<Plane> branches;
  for (int k = 0; k < 8; ++k) {
    branches.push_back(flip_transpose(infer_luma(net, flip_transpose(x, k, false), margin), k, true));
  }
  // pairwise sums in fixed order: eight equal branches average exactly
  while (branches.size() > 1) {
    std::vector<Plane> next;
    for (std::size_t i = 0; i + 1 < branches.size(); i += 2) {
      Plane sum = branches[i];
      for (std::size_t e = 0; e < sum.size(); ++e) sum.values()[e] += branches[i + 1].values()[e];
      next.push_back(std::move(sum));
    }
    branches = std::move(next);
  }
  Plane out = std::move(branches[0]);
  for (double& v : out.values()) v /= 8.0;
  return out;
}

InferenceResult run_inference(const Network& net, const Image& input, int scale,
                              bool ensemble) {
  if (scale < 1) throw std::invalid_argument("scale must be positive");
  const ColorImage ycc = to_ycbcr(input);
  const auto c = static_cast<std::size_t>(scale);
  const std::size_t h = ycc.y.height() * c, w = ycc.y.width() * c;
  const std::size_t margin = static_cast<std::size_t>(net.n());

  InferenceResult result;
  result.bicubic_luma = bicubic_resize(ycc.y, h, w);
  result.luma = ensemble ? self_ensemble(net, result.bicubic_luma, margin)
                         : infer_luma(net, result.bicubic_luma, margin);
  ColorImage out{result.luma, Plane(), Plane()};
  if (ycc.is_color()) {
    out.cb = bicubic_resize(ycc.cb, h, w);
    out.cr = bicubic_resize(ycc.cr, h, w);
  }
  result.image = from_ycbcr(out);
  const auto s = static_cast<std::size_t>(net.stride);
  result.metadata = {{"scale", scale},
                     {"ensemble", ensemble},
                     {"input_dims", {input.height(), input.width()}},
                     {"output_dims", {h, w}},
                     {"color", ycc.is_color()},
                     {"reflect_margin", margin},
                     {"padded", h % s != 0 || w % s != 0 || margin > 0},
                     {"variant", to_string(net.variant)},
                     {"threshold", net.threshold},
                     {"stride", net.stride}};
  return result;
}

}  // namespace ordsr::app
