#include "panoalign/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "panoalign/parallel.hpp"

namespace panoalign {
namespace {

constexpr double kPi = std::numbers::pi;

Mat3 from_columns(const Vec3& x, const Vec3& y, const Vec3& z) {
  Mat3 m;
  m.col(0) = x;
  m.col(1) = y;
  m.col(2) = z;
  return m;
}

}  // namespace

CameraModel CameraModel::cubemap(int face_size) {
  if (face_size <= 0) {
    throw Error(ErrorCode::kValidation, "face size must be positive, got " + std::to_string(face_size));
  }
  CameraModel cam;
  cam.face_size_ = face_size;
  const double half = 0.5 * face_size;
  cam.k_ << half, 0.0, half, 0.0, half, half, 0.0, 0.0, 1.0;
  cam.k_inv_ << 1.0 / half, 0.0, -1.0, 0.0, 1.0 / half, -1.0, 0.0, 0.0, 1.0;

  const Vec3 ex = Vec3::UnitX();
  const Vec3 ey = Vec3::UnitY();
  const Vec3 ez = Vec3::UnitZ();
  // Columns are the world images of the camera x (right), y (up), z (forward).
  cam.r_[0] = from_columns(ex, ey, ez);     // front
  cam.r_[1] = from_columns(-ez, ey, ex);    // right
  cam.r_[2] = from_columns(-ex, ey, -ez);   // back
  cam.r_[3] = from_columns(ez, ey, -ex);    // left
  cam.r_[4] = from_columns(ex, -ez, ey);    // up
  cam.r_[5] = from_columns(ex, ez, -ey);    // down
  return cam;
}

UnitRay CameraModel::pixel_ray(int face, PixelCoord p) const {
  const Vec3 cam_dir = k_inv_ * Vec3(p.u, p.v, 1.0);
  return UnitRay::normalized(rotation(face) * cam_dir);
}

SphericalCoord erp_pixel_to_spherical(double u, double v, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kValidation, "ERP dimensions must be positive");
  }
  if (!(u >= 0.0 && u < width && v >= 0.0 && v < height)) {
    throw Error(ErrorCode::kValidation, "ERP pixel (" + std::to_string(u) + ", " +
                                            std::to_string(v) + ") outside " +
                                            std::to_string(width) + "x" + std::to_string(height));
  }
  return {((u + 0.5) / width - 0.5) * 2.0 * kPi, (0.5 - (v + 0.5) / height) * kPi};
}

PixelCoord spherical_to_erp_pixel(const SphericalCoord& xi, int width, int height) {
  return {(xi.theta / (2.0 * kPi) + 0.5) * width - 0.5, (0.5 - xi.phi / kPi) * height - 0.5};
}

UnitRay spherical_to_ray(const SphericalCoord& xi) {
  const double cphi = std::cos(xi.phi);
  return UnitRay{Vec3(std::sin(xi.theta) * cphi, std::sin(xi.phi), std::cos(xi.theta) * cphi)};
}

SphericalCoord ray_to_spherical(const UnitRay& ray) {
  const Vec3& s = ray.s;
  return {std::atan2(s.x(), s.z()), std::asin(std::clamp(s.y(), -1.0, 1.0))};
}

UnitRay erp_pixel_ray(int x, int y, int width, int height) {
  return spherical_to_ray(erp_pixel_to_spherical(x, y, width, height));
}

int select_face(const UnitRay& ray, const CameraModel& cam) {
  int best = 0;
  double best_z = -2.0;
  for (int c = 0; c < kNumFaces; ++c) {
    const double z = cam.rotation(c).col(2).dot(ray.s);
    if (z > best_z) {
      best_z = z;
      best = c;
    }
  }
  return best;
}

PixelCoord project_to_face(const UnitRay& ray, const CameraModel& cam, int face) {
  const Vec3 local = cam.rotation(face).transpose() * ray.s;
  if (!(local.z() > 0.0)) {
    throw Error(ErrorCode::kDegenerateRay,
                "ray is behind face " + std::string(kFaceNames.at(static_cast<std::size_t>(face))));
  }
  const Vec3 p = cam.intrinsics() * (local / local.z());
  return {p.x(), p.y()};
}

FacePixel ray_to_face_pixel(const UnitRay& ray, const CameraModel& cam) {
  const int face = select_face(ray, cam);
  PixelCoord p = project_to_face(ray, cam, face);
  const double n = cam.face_size();
  p.u = std::clamp(p.u, 0.0, n);
  p.v = std::clamp(p.v, 0.0, n);
  return {face, p};
}

double rho_factor(PixelCoord p, const CameraModel& cam) {
  return (cam.intrinsics_inverse() * Vec3(p.u, p.v, 1.0)).norm();
}

VectorGrid erp_ray_grid(int width, int height) {
  VectorGrid rays(width, height);
  parallel_rows(height, [&](int y) {
    for (int x = 0; x < width; ++x) rays(x, y) = erp_pixel_ray(x, y, width, height).s;
  });
  return rays;
}

PointCloud lift_points(const ScalarGrid& depth, const MaskGrid* mask) {
  if (mask != nullptr) require_same_shape(depth, *mask, "lift_points mask");
  const int w = depth.width();
  const int h = depth.height();
  PointCloud cloud;
  cloud.points.reserve(depth.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask != nullptr && (*mask)(x, y) == 0) continue;
      const double d = depth(x, y);
      if (!(std::isfinite(d) && d > 0.0)) {
        throw Error(ErrorCode::kInvalidDepth, "non-positive or non-finite depth at (" +
                                                  std::to_string(x) + ", " + std::to_string(y) + ")");
      }
      cloud.points.push_back(d * erp_pixel_ray(x, y, w, h).s);
    }
  }
  return cloud;
}

NormalField normals_from_depth(const ScalarGrid& depth) {
  const int w = depth.width();
  const int h = depth.height();
  // Two fans of four triangles: the axial neighbors and the diagonal ones.
  // Each fan sums to a cross product of central differences, which keeps
  // the estimate unbiased where rows converge toward the poles.
  static constexpr std::array<std::array<int, 2>, 8> kRing = {
      {{1, 0}, {0, -1}, {-1, 0}, {0, 1}, {1, -1}, {-1, -1}, {-1, 1}, {1, 1}}};

  const VectorGrid rays = erp_ray_grid(w, h);
  NormalField out{VectorGrid(w, h), MaskGrid(w, h, 1)};
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 s = rays(x, y);
      const Vec3 center = depth(x, y) * s;
      std::array<Vec3, 8> ring;
      for (std::size_t k = 0; k < kRing.size(); ++k) {
        const int nx = wrap_x(x + kRing[k][0], w);
        const int ny = clamp_y(y + kRing[k][1], h);
        ring[k] = depth(nx, ny) * rays(nx, ny) - center;
      }
      Vec3 sum = Vec3::Zero();
      for (std::size_t fan = 0; fan < 8; fan += 4)
        for (std::size_t k = 0; k < 4; ++k) sum += ring[fan + k].cross(ring[fan + (k + 1) % 4]);
      const double len = sum.norm();
      if (!(len > 0.0) || !std::isfinite(len)) {
        out.normals(x, y) = -s;
        out.valid(x, y) = 0;
        continue;
      }
      Vec3 n = sum / len;
      if (n.dot(s) > 0.0) n = -n;
      out.normals(x, y) = n;
    }
  });
  return out;
}

}  // namespace panoalign
