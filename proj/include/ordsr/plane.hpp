#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ordsr {

// Dense row-major H x W matrix of doubles. Used for luminance images,
// transform filters and small square matrices alike.
class Plane {
 public:
  Plane() = default;
  Plane(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), values_(height * width, fill) {}
  Plane(std::size_t height, std::size_t width, std::vector<double> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != height_ * width_) {
      throw std::invalid_argument("Plane: value count does not match dims");
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * width_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * width_ + c];
  }

  double* row(std::size_t r) { return values_.data() + r * width_; }
  const double* row(std::size_t r) const { return values_.data() + r * width_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool same_dims(const Plane& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const Plane&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

// A single luminance plane with values nominally in [0, 1].
using LumaImage = Plane;

}  // namespace ordsr
