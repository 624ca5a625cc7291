#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordsr/plane.hpp"

namespace ordsr {

// 2D frequency index of a DCT-II basis function. k1 is the vertical (row)
// frequency, k2 the horizontal (column) frequency.
struct BasisIndex2D {
  int k1 = 0;
  int k2 = 0;
  bool operator==(const BasisIndex2D&) const = default;
};

enum class FilterTag { DctInitialized, Learned, Random };

const char* to_string(FilterTag tag);
FilterTag filter_tag_from_string(const std::string& s);

struct Filter {
  Plane values;  // n x n
  FilterTag tag = FilterTag::Learned;
};

// The n*n transform-layer filters, stored in zig-zag order: filters[0] is the
// filter with 1-based zig-zag index 1.
class FilterBank {
 public:
  FilterBank() = default;
  FilterBank(int n, std::vector<Filter> filters);

  int n() const { return n_; }
  std::size_t count() const { return filters_.size(); }
  std::size_t filter_size() const {
    return static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
  }

  const Filter& operator[](std::size_t i) const { return filters_[i]; }
  Filter& operator[](std::size_t i) { return filters_[i]; }
  const std::vector<Filter>& filters() const { return filters_; }

  void set_tag(FilterTag tag);

  // Every filter entry multiplied by `factor`.
  FilterBank scaled(double factor) const;

  bool operator==(const FilterBank& other) const;

 private:
  int n_ = 0;
  std::vector<Filter> filters_;
};

// JPEG-style anti-diagonal traversal of an n x n grid. Indices are 1-based to
// match the usual w_1 ... w_{n^2} numbering.
class ZigZag {
 public:
  explicit ZigZag(int n);

  int n() const { return n_; }
  int index(int k1, int k2) const;           // (k1,k2) -> i in [1, n^2]
  BasisIndex2D position(int index) const;     // i -> (k1,k2)

 private:
  int n_;
  std::vector<int> index_of_;            // row-major (k1,k2) -> i
  std::vector<BasisIndex2D> position_of_;  // i-1 -> (k1,k2)
};

ZigZag zigzag(int n);

// Orthonormal DCT-II basis value alpha(k1) alpha(k2) cos(..) cos(..).
double dct_basis_value(int n, int k1, int k2, int n1, int n2);

// All n^2 DCT-II basis filters in zig-zag order, tagged DctInitialized.
// Throws std::invalid_argument when n < 2.
FilterBank dct_basis(int n);

// Random filters uniform in +-sqrt(6 / (fan_in + fan_out)) with the bank
// viewed as an n^2-output, single-channel n x n convolution.
FilterBank random_bank(int n, std::uint64_t seed);

// A random orthonormal (non-DCT) bank from the QR factorisation of a
// Gaussian n^2 x n^2 matrix.
FilterBank random_orthonormal_bank(int n, std::uint64_t seed);

// Bessel-corrected variance of the filter entries.
double filter_variance(const Plane& filter);

// Little-endian container: "ORDSRFBK", u32 version, u32 n, u32 count, one
// u8 tag per filter, then count row-major n x n f64 matrices.
void write_filter_bank(std::ostream& out, const FilterBank& bank);
FilterBank read_filter_bank(std::istream& in);
void save_filter_bank(const std::filesystem::path& path, const FilterBank& bank);
FilterBank load_filter_bank(const std::filesystem::path& path);

nlohmann::json filter_bank_to_json(const FilterBank& bank);
FilterBank filter_bank_from_json(const nlohmann::json& j);

}  // namespace ordsr
