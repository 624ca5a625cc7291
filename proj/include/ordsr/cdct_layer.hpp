#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "ordsr/plane.hpp"
#include "ordsr/transform_core.hpp"

namespace ordsr {

// Stack of n^2 frequency maps, map-major: map k (0-based) holds the response
// of the filter with zig-zag index k+1 and occupies a contiguous slice.
struct DctCube {
  int n = 8;
  int stride = 8;
  int threshold = 0;
  std::size_t height = 0;  // source image dims
  std::size_t width = 0;
  std::size_t map_height = 0;
  std::size_t map_width = 0;
  std::vector<double> data;

  std::size_t map_count() const { return static_cast<std::size_t>(n * n); }
  std::size_t map_size() const { return map_height * map_width; }

  std::span<double> map(std::size_t k) {
    return {data.data() + k * map_size(), map_size()};
  }
  std::span<const double> map(std::size_t k) const {
    return {data.data() + k * map_size(), map_size()};
  }

  // Zero cube laid out for an H x W source at the given block size/stride.
  static DctCube zeros(int n, int stride, std::size_t height, std::size_t width);

  bool same_layout(const DctCube& other) const;
};

// Views into a cube: low = maps 1..T, high = maps T+1..n^2.
struct CubeSplit {
  int n = 8;
  int stride = 8;
  int threshold = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t map_height = 0;
  std::size_t map_width = 0;
  std::span<const double> low;
  std::span<const double> high;

  std::size_t low_count() const { return static_cast<std::size_t>(threshold); }
  std::size_t high_count() const {
    return static_cast<std::size_t>(n * n - threshold);
  }
};

// 1 / (n/S)^2, the overlap weight applied by the zero-padding step of the
// inverse.
double overlap_weight(int n, int stride);

// Checks the stride and image-size preconditions shared by the transforms.
void validate_transform_args(std::size_t height, std::size_t width, int n,
                             int stride);

// Circular, stride-S cross-correlation of x with every bank filter.
DctCube cdct_forward(const Plane& x, const FilterBank& bank, int stride);

// Direct block DCT at every stride-S block origin (circular extension),
// zig-zag re-indexed. Evaluates the cosine basis inline and does not use any
// FilterBank.
DctCube block_dct_oracle(const Plane& x, int stride, int n = 8);

CubeSplit split_cube(const DctCube& cube, int threshold);

// Concatenates low and high maps (in index order) into a full cube.
DctCube merge_cube(const CubeSplit& split);
DctCube merge_cube(const CubeSplit& layout, std::span<const double> low,
                   std::span<const double> high);

// Transpose convolution with S-zero-padded maps weighted by 1/(n/S)^2.
Plane cdct_inverse(const DctCube& cube, const FilterBank& bank);

// The exact adjoint of cdct_forward (no overlap weight):
// <cdct_forward(x), F> == <x, cdct_inverse_unweighted(F)>.
Plane cdct_inverse_unweighted(const DctCube& cube, const FilterBank& bank);

// d/dw of <cdct_forward(x, w), upstream>: entry (i, a, b) equals
// sum_{u,v} upstream_i(u,v) x(uS+a, vS+b).
std::vector<Plane> cdct_forward_filter_gradient(const Plane& x,
                                                const DctCube& upstream);

// d/dw of <cdct_inverse(cube, w), upstream>: entry (i, a, b) equals
// rho * sum_{u,v} cube_i(u,v) upstream(uS+a, vS+b).
std::vector<Plane> cdct_inverse_filter_gradient(const DctCube& cube,
                                                const Plane& upstream);

// G[i][j] = vec(w_i)^T vec(w_j).
Plane gram_matrix(const FilterBank& bank);

// Sum of squared off-diagonal Gram entries over ordered pairs.
double gram_off_diagonal_energy(const FilterBank& bank);

// Little-endian container: "ORDSRCUB", u32 version, u32 n, S, T, H, W,
// u8 dtype (0 = f64, 1 = f32), then maps in index order, row-major.
enum class CubeDtype : std::uint8_t { F64 = 0, F32 = 1 };
void write_cube(std::ostream& out, const DctCube& cube,
                CubeDtype dtype = CubeDtype::F64);
DctCube read_cube(std::istream& in);
void save_cube(const std::filesystem::path& path, const DctCube& cube,
               CubeDtype dtype = CubeDtype::F64);
DctCube load_cube(const std::filesystem::path& path);

}  // namespace ordsr
