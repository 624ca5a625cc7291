#include "ordsr/cdct_layer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"

namespace ordsr {

namespace {

constexpr std::string_view kCubeMagic = "ORDSRCUB";
constexpr std::uint32_t kCubeVersion = 1;

// x extended circularly by n rows and columns at the bottom/right.
Plane circular_pad(const Plane& x, int n) {
  const std::size_t h = x.height(), w = x.width();
  const std::size_t pad = static_cast<std::size_t>(n);
  Plane out(h + pad, w + pad);
  for (std::size_t r = 0; r < h + pad; ++r) {
    const double* src = x.row(r % h);
    double* dst = out.row(r);
    for (std::size_t c = 0; c < w + pad; ++c) dst[c] = src[c % w];
  }
  return out;
}

// Adds the overhang of a padded accumulator back onto the H x W image.
Plane circular_fold(const Plane& padded, std::size_t h, std::size_t w) {
  Plane out(h, w);
  for (std::size_t r = 0; r < padded.height(); ++r) {
    const double* src = padded.row(r);
    double* dst = out.row(r % h);
    for (std::size_t c = 0; c < padded.width(); ++c) dst[c % w] += src[c];
  }
  return out;
}

// Accumulates sum_i w_i (*) zero-stuffed maps onto a padded canvas, with each
// map value multiplied by `weight` first.
Plane scatter(const DctCube& cube, const FilterBank& bank, double weight) {
  if (bank.n() != cube.n || cube.data.size() != cube.map_count() * cube.map_size()) {
    throw std::invalid_argument("cube does not match filter bank");
  }
  validate_transform_args(cube.height, cube.width, cube.n, cube.stride);
  if (cube.map_height * static_cast<std::size_t>(cube.stride) != cube.height ||
      cube.map_width * static_cast<std::size_t>(cube.stride) != cube.width) {
    throw std::invalid_argument("cube map dims inconsistent with stride");
  }
  const int n = cube.n;
  const std::size_t s = static_cast<std::size_t>(cube.stride);
  const std::size_t mh = cube.map_height, mw = cube.map_width;
  Plane padded(cube.height + static_cast<std::size_t>(n),
               cube.width + static_cast<std::size_t>(n));
  std::vector<double> scaled(cube.map_size());
  for (std::size_t i = 0; i < cube.map_count(); ++i) {
    const auto map = cube.map(i);
    for (std::size_t k = 0; k < scaled.size(); ++k) scaled[k] = weight * map[k];
    const Plane& f = bank[i].values;
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const double wv = f(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        for (std::size_t u = 0; u < mh; ++u) {
          double* dst = padded.row(u * s + static_cast<std::size_t>(a)) + b;
          const double* src = scaled.data() + u * mw;
          for (std::size_t v = 0; v < mw; ++v) dst[v * s] += wv * src[v];
        }
      }
    }
  }
  return circular_fold(padded, cube.height, cube.width);
}

// Shared core of the two filter-gradient adjoints: entry (i, a, b) is
// scale * sum_{u,v} maps_i(u,v) image_p(uS+a, vS+b).
std::vector<Plane> correlate_maps(const DctCube& maps, const Plane& image,
                                  double scale) {
  if (!(image.height() == maps.height && image.width() == maps.width)) {
    throw std::invalid_argument("image dims do not match cube source dims");
  }
  const int n = maps.n;
  const std::size_t s = static_cast<std::size_t>(maps.stride);
  const Plane padded = circular_pad(image, n);
  std::vector<Plane> out;
  out.reserve(maps.map_count());
  for (std::size_t i = 0; i < maps.map_count(); ++i) {
    const auto m = maps.map(i);
    Plane g(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        double acc = 0.0;
        for (std::size_t u = 0; u < maps.map_height; ++u) {
          const double* src = padded.row(u * s + static_cast<std::size_t>(a)) + b;
          const double* mv = m.data() + u * maps.map_width;
          for (std::size_t v = 0; v < maps.map_width; ++v) acc += mv[v] * src[v * s];
        }
        g(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) = scale * acc;
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

DctCube DctCube::zeros(int n, int stride, std::size_t height, std::size_t width) {
  validate_transform_args(height, width, n, stride);
  DctCube cube;
  cube.n = n;
  cube.stride = stride;
  cube.height = height;
  cube.width = width;
  cube.map_height = height / static_cast<std::size_t>(stride);
  cube.map_width = width / static_cast<std::size_t>(stride);
  cube.data.assign(cube.map_count() * cube.map_size(), 0.0);
  return cube;
}

bool DctCube::same_layout(const DctCube& other) const {
  return n == other.n && stride == other.stride && height == other.height &&
         width == other.width && map_height == other.map_height &&
         map_width == other.map_width;
}

double overlap_weight(int n, int stride) {
  const double ratio = static_cast<double>(n) / static_cast<double>(stride);
  return 1.0 / (ratio * ratio);
}

void validate_transform_args(std::size_t height, std::size_t width, int n,
                             int stride) {
  if (n < 2) throw std::invalid_argument("block size must be >= 2");
  if (stride < 1 || n % stride != 0) {
    throw std::invalid_argument("stride " + std::to_string(stride) +
                                " does not divide block size " +
                                std::to_string(n));
  }
  if (height < static_cast<std::size_t>(n) || width < static_cast<std::size_t>(n)) {
    throw std::invalid_argument("image smaller than transform filter");
  }
  const auto s = static_cast<std::size_t>(stride);
  if (height % s != 0 || width % s != 0) {
    throw std::invalid_argument("image dims must be multiples of the stride");
  }
}

DctCube cdct_forward(const Plane& x, const FilterBank& bank, int stride) {
  const int n = bank.n();
  validate_transform_args(x.height(), x.width(), n, stride);
  DctCube cube = DctCube::zeros(n, stride, x.height(), x.width());
  const Plane padded = circular_pad(x, n);
  const std::size_t s = static_cast<std::size_t>(stride);
  for (std::size_t i = 0; i < cube.map_count(); ++i) {
    auto out = cube.map(i);
    const Plane& f = bank[i].values;
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const double wv = f(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        for (std::size_t u = 0; u < cube.map_height; ++u) {
          const double* src = padded.row(u * s + static_cast<std::size_t>(a)) + b;
          double* dst = out.data() + u * cube.map_width;
          for (std::size_t v = 0; v < cube.map_width; ++v) dst[v] += wv * src[v * s];
        }
      }
    }
  }
  return cube;
}

DctCube block_dct_oracle(const Plane& x, int stride, int n) {
  validate_transform_args(x.height(), x.width(), n, stride);
  DctCube cube = DctCube::zeros(n, stride, x.height(), x.width());
  // basis[k][m] = alpha(k) cos(pi/n (m + 1/2) k)
  std::vector<double> basis(static_cast<std::size_t>(n * n));
  for (int k = 0; k < n; ++k) {
    const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int m = 0; m < n; ++m) {
      basis[static_cast<std::size_t>(k * n + m)] =
          alpha * std::cos(std::numbers::pi / n * (m + 0.5) * k);
    }
  }
  const ZigZag zz(n);
  const std::size_t h = x.height(), w = x.width();
  std::vector<double> block(static_cast<std::size_t>(n * n));
  for (std::size_t u = 0; u < cube.map_height; ++u) {
    for (std::size_t v = 0; v < cube.map_width; ++v) {
      for (int n1 = 0; n1 < n; ++n1) {
        for (int n2 = 0; n2 < n; ++n2) {
          block[static_cast<std::size_t>(n1 * n + n2)] =
              x((u * static_cast<std::size_t>(stride) + static_cast<std::size_t>(n1)) % h,
                (v * static_cast<std::size_t>(stride) + static_cast<std::size_t>(n2)) % w);
        }
      }
      for (int k1 = 0; k1 < n; ++k1) {
        for (int k2 = 0; k2 < n; ++k2) {
          double coeff = 0.0;
          for (int n2 = 0; n2 < n; ++n2) {
            for (int n1 = 0; n1 < n; ++n1) {
              coeff += block[static_cast<std::size_t>(n1 * n + n2)] *
                       basis[static_cast<std::size_t>(k1 * n + n1)] *
                       basis[static_cast<std::size_t>(k2 * n + n2)];
            }
          }
          const auto i = static_cast<std::size_t>(zz.index(k1, k2) - 1);
          cube.map(i)[u * cube.map_width + v] = coeff;
        }
      }
    }
  }
  return cube;
}

CubeSplit split_cube(const DctCube& cube, int threshold) {
  const int total = cube.n * cube.n;
  if (threshold < 0 || threshold > total) {
    throw std::invalid_argument("threshold must lie in [0, n^2]");
  }
  CubeSplit split;
  split.n = cube.n;
  split.stride = cube.stride;
  split.threshold = threshold;
  split.height = cube.height;
  split.width = cube.width;
  split.map_height = cube.map_height;
  split.map_width = cube.map_width;
  const std::size_t cut = static_cast<std::size_t>(threshold) * cube.map_size();
  split.low = std::span<const double>(cube.data).subspan(0, cut);
  split.high = std::span<const double>(cube.data).subspan(cut);
  return split;
}

DctCube merge_cube(const CubeSplit& split) {
  return merge_cube(split, split.low, split.high);
}

DctCube merge_cube(const CubeSplit& layout, std::span<const double> low,
                   std::span<const double> high) {
  DctCube cube = DctCube::zeros(layout.n, layout.stride, layout.height, layout.width);
  cube.threshold = layout.threshold;
  const std::size_t ms = cube.map_size();
  if (low.size() != layout.low_count() * ms || high.size() != layout.high_count() * ms) {
    throw std::invalid_argument("merge: map slices do not match layout");
  }
  std::copy(low.begin(), low.end(), cube.data.begin());
  std::copy(high.begin(), high.end(), cube.data.begin() + static_cast<std::ptrdiff_t>(low.size()));
  return cube;
}

Plane cdct_inverse(const DctCube& cube, const FilterBank& bank) {
  return scatter(cube, bank, overlap_weight(cube.n, cube.stride));
}

Plane cdct_inverse_unweighted(const DctCube& cube, const FilterBank& bank) {
  return scatter(cube, bank, 1.0);
}

std::vector<Plane> cdct_forward_filter_gradient(const Plane& x,
                                                const DctCube& upstream) {
  return correlate_maps(upstream, x, 1.0);
}

std::vector<Plane> cdct_inverse_filter_gradient(const DctCube& cube,
                                                const Plane& upstream) {
  return correlate_maps(cube, upstream, overlap_weight(cube.n, cube.stride));
}

Plane gram_matrix(const FilterBank& bank) {
  const std::size_t m = bank.count();
  Plane g(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto wi = bank[i].values.values();
    for (std::size_t j = i; j < m; ++j) {
      const auto wj = bank[j].values.values();
      double dot = 0.0;
      for (std::size_t e = 0; e < wi.size(); ++e) dot += wi[e] * wj[e];
      g(i, j) = dot;
      g(j, i) = dot;
    }
  }
  return g;
}

double gram_off_diagonal_energy(const FilterBank& bank) {
  const Plane g = gram_matrix(bank);
  double energy = 0.0;
  for (std::size_t i = 0; i < g.height(); ++i) {
    for (std::size_t j = 0; j < g.width(); ++j) {
      if (i != j) energy += g(i, j) * g(i, j);
    }
  }
  return energy;
}

void write_cube(std::ostream& out, const DctCube& cube, CubeDtype dtype) {
  binio::put_magic(out, kCubeMagic);
  binio::put<std::uint32_t>(out, kCubeVersion);
  for (auto v : {static_cast<std::uint32_t>(cube.n), static_cast<std::uint32_t>(cube.stride),
                 static_cast<std::uint32_t>(cube.threshold),
                 static_cast<std::uint32_t>(cube.height),
                 static_cast<std::uint32_t>(cube.width)}) {
    binio::put<std::uint32_t>(out, v);
  }
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
  if (dtype == CubeDtype::F64) {
    binio::put_doubles(out, cube.data);
  } else {
    for (double v : cube.data) binio::put<float>(out, static_cast<float>(v));
  }
}

DctCube read_cube(std::istream& in) {
  binio::expect_magic(in, kCubeMagic);
  if (binio::get<std::uint32_t>(in) != kCubeVersion) {
    throw std::runtime_error("unsupported cube version");
  }
  const int n = static_cast<int>(binio::get<std::uint32_t>(in));
  const int stride = static_cast<int>(binio::get<std::uint32_t>(in));
  const int threshold = static_cast<int>(binio::get<std::uint32_t>(in));
  const std::size_t h = binio::get<std::uint32_t>(in);
  const std::size_t w = binio::get<std::uint32_t>(in);
  const auto dtype = binio::get<std::uint8_t>(in);
  DctCube cube = DctCube::zeros(n, stride, h, w);
  if (threshold < 0 || threshold > n * n) throw std::runtime_error("corrupt cube threshold");
  cube.threshold = threshold;
  if (dtype == static_cast<std::uint8_t>(CubeDtype::F64)) {
    binio::get_doubles(in, cube.data);
  } else if (dtype == static_cast<std::uint8_t>(CubeDtype::F32)) {
    for (double& v : cube.data) v = binio::get<float>(in);
  } else {
    throw std::runtime_error("unknown cube dtype tag");
  }
  return cube;
}

void save_cube(const std::filesystem::path& path, const DctCube& cube,
               CubeDtype dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_cube(out, cube, dtype);
}

DctCube load_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_cube(in);
}

}  // namespace ordsr
