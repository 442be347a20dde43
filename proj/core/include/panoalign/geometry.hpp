#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "panoalign/grid.hpp"

namespace panoalign {

/// Azimuth theta in [-pi, pi], elevation phi in [-pi/2, pi/2].
/// World frame: x right, y up, z forward.
struct SphericalCoord {
  double theta = 0.0;
  double phi = 0.0;
};

/// Unit-length direction. Construct through normalized() unless the vector
/// is known to be unit already.
struct UnitRay {
  Vec3 s = Vec3::UnitZ();

  static UnitRay normalized(const Vec3& v) { return UnitRay{v.normalized()}; }
};

/// Continuous ERP / face image position. Pixel (i, j) has its center at
/// (i + 0.5, j + 0.5).
struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

inline constexpr int kNumFaces = 6;
inline constexpr std::array<std::string_view, kNumFaces> kFaceNames = {
    "front", "right", "back", "left", "up", "down"};

/// Six 90-degree pinhole cameras sharing a center. Face c looks along
/// rotation(c) * (0, 0, 1). In face-camera coordinates x points right and
/// y points up, so face pixel rows grow upward (row 0 is the bottom).
class CameraModel {
 public:
  /// Axis-aligned cube in the fixed order front, right, back, left, up, down.
  static CameraModel cubemap(int face_size);

  int face_size() const noexcept { return face_size_; }
  const Mat3& intrinsics() const noexcept { return k_; }
  const Mat3& intrinsics_inverse() const noexcept { return k_inv_; }
  const Mat3& rotation(int face) const { return r_.at(static_cast<std::size_t>(face)); }

  /// Direction of the face pixel position p, in the world frame.
  UnitRay pixel_ray(int face, PixelCoord p) const;

 private:
  CameraModel() = default;

  int face_size_ = 0;
  Mat3 k_ = Mat3::Identity();
  Mat3 k_inv_ = Mat3::Identity();
  std::array<Mat3, kNumFaces> r_{};
};

struct FacePixel {
  int face = 0;
  PixelCoord p;
};

SphericalCoord erp_pixel_to_spherical(double u, double v, int width, int height);
PixelCoord spherical_to_erp_pixel(const SphericalCoord& xi, int width, int height);

UnitRay spherical_to_ray(const SphericalCoord& xi);
SphericalCoord ray_to_spherical(const UnitRay& ray);

/// Unit ray through the center of ERP pixel (x, y).
UnitRay erp_pixel_ray(int x, int y, int width, int height);

/// Face owning the ray (largest camera-frame z, ties to the lowest index).
int select_face(const UnitRay& ray, const CameraModel& cam);

/// Perspective projection onto the owning face. The returned position is in
/// [0, face_size]^2; throws DegenerateRay if the ray is behind that face.
FacePixel ray_to_face_pixel(const UnitRay& ray, const CameraModel& cam);

/// Same projection onto a given face, without ownership selection.
PixelCoord project_to_face(const UnitRay& ray, const CameraModel& cam, int face);

/// Ratio of radial distance to z-depth for a face pixel position: |K^-1 p~|.
double rho_factor(PixelCoord p, const CameraModel& cam);

/// Nearest face pixel index for a continuous face position.
inline int nearest_index(double coord, int size) {
  const int i = static_cast<int>(coord);
  return i < 0 ? 0 : (i >= size ? size - 1 : i);
}

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::array<std::uint8_t, 3>> colors;  // empty or one per point

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

/// Per-pixel unit rays of an ERP grid, cached for repeated lifting.
VectorGrid erp_ray_grid(int width, int height);

/// One point D * S per pixel. Without a mask, every pixel must carry a finite
/// positive depth (InvalidDepth otherwise); with a mask only nonzero pixels
/// are lifted.
PointCloud lift_points(const ScalarGrid& depth, const MaskGrid* mask = nullptr);

struct NormalField {
  VectorGrid normals;
  MaskGrid valid;  // 0 where every neighborhood triangle was degenerate
};

/// Normals of the lifted surface: sum of the eight triangle normals of two
/// four-triangle fans around the pixel (axial and diagonal neighbors), which
/// equals (E - W) x (N - S) + (NE - SW) x (NW - SE). Oriented toward the
/// camera. Columns wrap, rows clamp. Pixels with a degenerate neighborhood
/// get -S and valid = 0.
NormalField normals_from_depth(const ScalarGrid& depth);

}  // namespace panoalign
