#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "panoalign/error.hpp"

namespace panoalign {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Dense row-major 2D field. Pixel (x, y) lives at data[y * width + x];
/// y = 0 is the top row for ERP grids.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, const T& fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked_area(width, height)), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  std::span<T> row(int y) { return {data_.data() + index(0, y), static_cast<std::size_t>(width_)}; }
  std::span<const T> row(int y) const {
    return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool same_shape(int w, int h) const noexcept { return width_ == w && height_ == h; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  static long long checked_area(int w, int h) {
    if (w < 0 || h < 0) throw Error(ErrorCode::kValidation, "negative grid dimensions");
    return static_cast<long long>(w) * h;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ScalarGrid = Grid<double>;
using VectorGrid = Grid<Vec3>;
using MaskGrid = Grid<std::uint8_t>;
using FaceIdMap = Grid<std::uint8_t>;

/// Throws ValidationError unless the grid has equirectangular proportions.
template <typename T>
void require_erp_shape(const Grid<T>& g, const char* what) {
  if (g.height() <= 0 || g.width() != 2 * g.height()) {
    throw Error(ErrorCode::kValidation,
                std::string(what) + ": equirectangular grid must have width = 2 * height, got " +
                    std::to_string(g.width()) + "x" + std::to_string(g.height()));
  }
}

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

/// Wraps a column index into [0, width).
inline int wrap_x(int x, int width) noexcept {
  const int m = x % width;
  return m < 0 ? m + width : m;
}

inline int clamp_y(int y, int height) noexcept {
  return y < 0 ? 0 : (y >= height ? height - 1 : y);
}

}  // namespace panoalign
