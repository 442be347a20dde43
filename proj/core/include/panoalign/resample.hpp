#pragma once

#include <array>

#include "panoalign/geometry.hpp"
#include "panoalign/grid.hpp"

namespace panoalign {

enum class Interp { kNearest, kBilinear };

/// Six square per-face grids plus the camera that produced them.
template <typename T>
struct CubemapFaces {
  std::array<Grid<T>, kNumFaces> faces;
  CameraModel cam;

  explicit CubemapFaces(const CameraModel& camera) : cam(camera) {
    for (auto& f : faces) f = Grid<T>(camera.face_size(), camera.face_size());
  }
};

using DepthFaces = CubemapFaces<double>;
using NormalFaces = CubemapFaces<Vec3>;

/// Default face resolution for an ERP grid of the given height.
inline int default_face_size(int erp_height) { return erp_height / 2 > 0 ? erp_height / 2 : 1; }

/// Samples an ERP grid at a continuous pixel position; columns wrap, rows
/// clamp.
double sample_erp(const ScalarGrid& erp, PixelCoord p, Interp interp);
Vec3 sample_erp(const VectorGrid& erp, PixelCoord p, Interp interp);

/// Renders each face pixel from the ERP grid along the pixel's ray.
DepthFaces erp_to_faces(const ScalarGrid& erp, const CameraModel& cam, Interp interp);
NormalFaces erp_to_faces(const VectorGrid& erp, const CameraModel& cam, Interp interp);

/// Face ownership of every ERP pixel center under the max-z rule.
FaceIdMap build_face_id_map(int erp_width, int erp_height, const CameraModel& cam);

struct MergedDepth {
  ScalarGrid depth;  // radial depth
  FaceIdMap face_id;
  MaskGrid valid;    // 0 where the sampled face depth was non-positive or non-finite
};

/// Radial ERP depth from per-face z-depth: nearest face sample times rho at
/// the projected position.
MergedDepth merge_depth_to_erp(const DepthFaces& faces, int erp_width);

struct MergedNormals {
  VectorGrid normals;  // world frame, unit length where valid
  MaskGrid valid;      // 0 for zero or non-finite samples
};

/// World-frame ERP normals from face-frame normals (n = R_c n_face),
/// renormalized. flip negates every vector.
MergedNormals merge_normals_to_erp(const NormalFaces& faces, const FaceIdMap& face_id,
                                   bool flip = false);

/// Same merge for normals already expressed in the world frame.
MergedNormals merge_world_normals_to_erp(const NormalFaces& faces, const FaceIdMap& face_id,
                                         bool flip = false);

/// Per-pixel scale lambda[face_id(pixel)].
ScalarGrid expand_scale_map(const std::array<double, kNumFaces>& lambda, const FaceIdMap& face_id);

/// Box-filter reduction by an integer factor to floor(w/f) x floor(h/f).
/// With a mask, invalid pixels are excluded from the average.
ScalarGrid downsample(const ScalarGrid& g, int factor, const MaskGrid* valid = nullptr);
/// Averages then renormalizes.
VectorGrid downsample(const VectorGrid& g, int factor, const MaskGrid* valid = nullptr);
/// AND-reduction.
MaskGrid downsample_mask(const MaskGrid& m, int factor);
/// Label of the pixel nearest the block center.
FaceIdMap downsample_labels(const FaceIdMap& labels, int factor);

/// Bilinear resize to a larger grid with pixel-center alignment; columns
/// wrap, rows clamp.
ScalarGrid upsample(const ScalarGrid& g, int width, int height);
/// Bilinear then renormalized.
VectorGrid upsample(const VectorGrid& g, int width, int height);

/// Circular shift of all columns by `shift` (pixel x moves to x + shift).
template <typename T>
Grid<T> roll_columns(const Grid<T>& g, int shift) {
  Grid<T> out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) out(wrap_x(x + shift, g.width()), y) = g(x, y);
  return out;
}

/// Rotates an ERP field of world vectors about the vertical axis together
/// with the column shift, so the result describes the yawed scene.
VectorGrid roll_vectors(const VectorGrid& g, int shift);

}  // namespace panoalign
