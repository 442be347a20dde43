#include "panoalign/resample.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "panoalign/parallel.hpp"

namespace panoalign {
namespace {

template <typename T>
T sample_impl(const Grid<T>& erp, PixelCoord p, Interp interp) {
  const int w = erp.width();
  const int h = erp.height();
  if (interp == Interp::kNearest) {
    const int x = wrap_x(static_cast<int>(std::floor(p.u + 0.5)), w);
    const int y = clamp_y(static_cast<int>(std::floor(p.v + 0.5)), h);
    return erp(x, y);
  }
  const double fx = std::floor(p.u);
  const double fy = std::floor(p.v);
  const double ax = p.u - fx;
  const double ay = p.v - fy;
  const int x0 = wrap_x(static_cast<int>(fx), w);
  const int x1 = wrap_x(static_cast<int>(fx) + 1, w);
  const int y0 = clamp_y(static_cast<int>(fy), h);
  const int y1 = clamp_y(static_cast<int>(fy) + 1, h);
  const T top = (1.0 - ax) * erp(x0, y0) + ax * erp(x1, y0);
  const T bottom = (1.0 - ax) * erp(x0, y1) + ax * erp(x1, y1);
  return (1.0 - ay) * top + ay * bottom;
}

template <typename T>
CubemapFaces<T> erp_to_faces_impl(const Grid<T>& erp, const CameraModel& cam, Interp interp) {
  require_erp_shape(erp, "erp_to_faces");
  CubemapFaces<T> out(cam);
  const int n = cam.face_size();
  for (int c = 0; c < kNumFaces; ++c) {
    auto& face = out.faces[static_cast<std::size_t>(c)];
    parallel_rows(n, [&](int j) {
      for (int i = 0; i < n; ++i) {
        const UnitRay ray = cam.pixel_ray(c, {i + 0.5, j + 0.5});
        const PixelCoord p = spherical_to_erp_pixel(ray_to_spherical(ray), erp.width(), erp.height());
        face(i, j) = sample_impl(erp, p, interp);
      }
    });
  }
  return out;
}

bool finite_vec(const Vec3& v) { return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z()); }

MergedNormals merge_normals_impl(const NormalFaces& faces, const FaceIdMap& face_id, bool flip,
                                 bool rotate) {
  require_erp_shape(face_id, "merge_normals_to_erp");
  const int w = face_id.width();
  const int h = face_id.height();
  const CameraModel& cam = faces.cam;
  const int n = cam.face_size();
  MergedNormals out{VectorGrid(w, h), MaskGrid(w, h, 1)};
  const double sign = flip ? -1.0 : 1.0;
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const int c = face_id(x, y);
      if (c >= kNumFaces) throw Error(ErrorCode::kValidation, "face id out of range");
      const UnitRay ray = erp_pixel_ray(x, y, w, h);
      const PixelCoord p = project_to_face(ray, cam, c);
      const Vec3& v = faces.faces[static_cast<std::size_t>(c)](nearest_index(p.u, n), nearest_index(p.v, n));
      const Vec3 world = rotate ? Vec3(cam.rotation(c) * v) : v;
      const double len = world.norm();
      if (!(len > 0.0) || !finite_vec(world)) {
        out.normals(x, y) = -ray.s;
        out.valid(x, y) = 0;
        continue;
      }
      out.normals(x, y) = sign * world / len;
    }
  });
  return out;
}

template <typename T>
Grid<T> box_reduce(const Grid<T>& g, int factor, const MaskGrid* valid, const T& zero) {
  if (factor < 1) throw Error(ErrorCode::kValidation, "downsample factor must be >= 1");
  if (valid != nullptr) require_same_shape(g, *valid, "downsample mask");
  const int w = g.width() / factor;
  const int h = g.height() / factor;
  if (w == 0 || h == 0) throw Error(ErrorCode::kValidation, "downsample factor exceeds grid size");
  Grid<T> out(w, h);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      T sum = zero;
      int count = 0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          const int sx = x * factor + dx;
          const int sy = y * factor + dy;
          if (valid != nullptr && (*valid)(sx, sy) == 0) continue;
          sum += g(sx, sy);
          ++count;
        }
      }
      out(x, y) = count > 0 ? T(sum / static_cast<double>(count)) : zero;
    }
  });
  return out;
}

template <typename T>
Grid<T> bilinear_resize(const Grid<T>& g, int width, int height) {
  if (width < g.width() || height < g.height()) {
    throw Error(ErrorCode::kValidation, "upsample target must not be smaller than the source");
  }
  Grid<T> out(width, height);
  const double sx = static_cast<double>(g.width()) / width;
  const double sy = static_cast<double>(g.height()) / height;
  parallel_rows(height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      const PixelCoord p{(x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5};
      out(x, y) = sample_impl(g, p, Interp::kBilinear);
    }
  });
  return out;
}

void renormalize(VectorGrid& g) {
  for (auto& v : g.values()) {
    const double len = v.norm();
    if (len > 0.0) v /= len;
  }
}

}  // namespace

double sample_erp(const ScalarGrid& erp, PixelCoord p, Interp interp) { return sample_impl(erp, p, interp); }
Vec3 sample_erp(const VectorGrid& erp, PixelCoord p, Interp interp) { return sample_impl(erp, p, interp); }

DepthFaces erp_to_faces(const ScalarGrid& erp, const CameraModel& cam, Interp interp) {
  return erp_to_faces_impl(erp, cam, interp);
}

NormalFaces erp_to_faces(const VectorGrid& erp, const CameraModel& cam, Interp interp) {
  return erp_to_faces_impl(erp, cam, interp);
}

FaceIdMap build_face_id_map(int erp_width, int erp_height, const CameraModel& cam) {
  FaceIdMap ids(erp_width, erp_height);
  parallel_rows(erp_height, [&](int y) {
    for (int x = 0; x < erp_width; ++x) {
      ids(x, y) = static_cast<std::uint8_t>(select_face(erp_pixel_ray(x, y, erp_width, erp_height), cam));
    }
  });
  return ids;
}

MergedDepth merge_depth_to_erp(const DepthFaces& faces, int erp_width) {
  if (erp_width <= 0 || erp_width % 2 != 0) {
    throw Error(ErrorCode::kValidation, "ERP width must be positive and even, got " + std::to_string(erp_width));
  }
  const int w = erp_width;
  const int h = erp_width / 2;
  const CameraModel& cam = faces.cam;
  const int n = cam.face_size();
  for (const auto& f : faces.faces) {
    if (!f.same_shape(n, n)) throw Error(ErrorCode::kDimensionMismatch, "face size does not match camera");
  }
  MergedDepth out{ScalarGrid(w, h), FaceIdMap(w, h), MaskGrid(w, h, 1)};
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const UnitRay ray = erp_pixel_ray(x, y, w, h);
      const FacePixel fp = ray_to_face_pixel(ray, cam);
      const double z = faces.faces[static_cast<std::size_t>(fp.face)](nearest_index(fp.p.u, n),
                                                                     nearest_index(fp.p.v, n));
      out.face_id(x, y) = static_cast<std::uint8_t>(fp.face);
      if (!(std::isfinite(z) && z > 0.0)) {
        out.depth(x, y) = 0.0;
        out.valid(x, y) = 0;
        continue;
      }
      out.depth(x, y) = rho_factor(fp.p, cam) * z;
    }
  });
  return out;
}

MergedNormals merge_normals_to_erp(const NormalFaces& faces, const FaceIdMap& face_id, bool flip) {
  return merge_normals_impl(faces, face_id, flip, true);
}

MergedNormals merge_world_normals_to_erp(const NormalFaces& faces, const FaceIdMap& face_id, bool flip) {
  return merge_normals_impl(faces, face_id, flip, false);
}

ScalarGrid expand_scale_map(const std::array<double, kNumFaces>& lambda, const FaceIdMap& face_id) {
  ScalarGrid out(face_id.width(), face_id.height());
  for (std::size_t i = 0; i < face_id.size(); ++i) {
    const auto c = face_id[i];
    if (c >= kNumFaces) throw Error(ErrorCode::kValidation, "face id out of range");
    out[i] = lambda[c];
  }
  return out;
}

ScalarGrid downsample(const ScalarGrid& g, int factor, const MaskGrid* valid) {
  return box_reduce(g, factor, valid, 0.0);
}

VectorGrid downsample(const VectorGrid& g, int factor, const MaskGrid* valid) {
  VectorGrid out = box_reduce(g, factor, valid, Vec3(Vec3::Zero()));
  renormalize(out);
  return out;
}

MaskGrid downsample_mask(const MaskGrid& m, int factor) {
  if (factor < 1) throw Error(ErrorCode::kValidation, "downsample factor must be >= 1");
  const int w = m.width() / factor;
  const int h = m.height() / factor;
  MaskGrid out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          if (m(x * factor + dx, y * factor + dy) == 0) out(x, y) = 0;
  return out;
}

FaceIdMap downsample_labels(const FaceIdMap& labels, int factor) {
  if (factor < 1) throw Error(ErrorCode::kValidation, "downsample factor must be >= 1");
  const int w = labels.width() / factor;
  const int h = labels.height() / factor;
  FaceIdMap out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(x, y) = labels(x * factor + factor / 2, y * factor + factor / 2);
  return out;
}

ScalarGrid upsample(const ScalarGrid& g, int width, int height) { return bilinear_resize(g, width, height); }

VectorGrid upsample(const VectorGrid& g, int width, int height) {
  VectorGrid out = bilinear_resize(g, width, height);
  renormalize(out);
  return out;
}

VectorGrid roll_vectors(const VectorGrid& g, int shift) {
  const double angle = 2.0 * std::numbers::pi * shift / g.width();
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  VectorGrid out = roll_columns(g, shift);
  for (auto& v : out.values()) v = Vec3(c * v.x() + s * v.z(), v.y(), -s * v.x() + c * v.z());
  return out;
}

}  // namespace panoalign
