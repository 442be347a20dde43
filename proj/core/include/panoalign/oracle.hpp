#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "panoalign/geometry.hpp"
#include "panoalign/graphopt.hpp"
#include "panoalign/resample.hpp"

namespace panoalign {

enum class SceneKind { kBox, kSphere };

/// Analytic test scene centered at the origin: an axis-aligned box with the
/// given half-extents, or a sphere of the given radius. The camera must be
/// strictly inside.
struct SceneSpec {
  SceneKind kind = SceneKind::kBox;
  Vec3 half_extents{3.0, 1.5, 4.0};
  double radius = 3.0;
  Vec3 camera{0.0, 0.0, 0.0};
  int erp_width = 256;

  void validate() const;
};

struct SurfaceHit {
  double distance = 0.0;  // along the unit ray
  Vec3 normal;            // unit, facing the camera
  double albedo = 0.0;
  int surface = 0;
};

/// Exact first intersection of the ray from the scene camera.
SurfaceHit trace(const SceneSpec& scene, const UnitRay& ray);

struct SceneRender {
  ScalarGrid depth;       // radial
  VectorGrid normals;     // world frame, toward the camera
  ScalarGrid intensity;   // per-surface albedo in [0, 1]
  Grid<std::uint8_t> surface;
};

SceneRender render_scene(const SceneSpec& scene);

/// Per-face scale and noise applied to perspective renders.
struct Corruption {
  std::array<double, kNumFaces> scales{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  double normal_noise_deg = 0.0;  // std-dev of the angular perturbation
  double depth_noise = 0.0;       // relative std-dev

  void validate() const;
};

struct CorruptedFaces {
  DepthFaces depth;     // z-depth, scaled per face
  NormalFaces normals;  // face-camera frame

  explicit CorruptedFaces(const CameraModel& cam) : depth(cam), normals(cam) {}
};

/// Renders every face pixel center as a perspective predictor would report
/// it (z-depth = radial / rho), then applies the corruption.
CorruptedFaces corrupt(const SceneSpec& scene, const CameraModel& cam, const Corruption& c,
                       std::uint64_t seed);

/// Merged ERP inputs for an oracle scene: corrupted faces merged back to ERP
/// with the scene albedo as intensity.
OptInputs merged_oracle_inputs(const SceneSpec& scene, const CameraModel& cam, const Corruption& c,
                               std::uint64_t seed);

/// Largest grid accepted by the gradient check.
inline constexpr int kMaxGradcheckWidth = 32;
inline constexpr int kMaxGradcheckHeight = 16;
void require_gradcheck_size(int width, int height);

struct GradcheckInstance {
  Problem problem;
  OptState state;
  OptConfig cfg;
};

/// Smoothed vector norms curve as 1/r in every direction, so the central
/// difference error near them is about (h/r)^2 / 6. They are kept this many
/// scalar margins away from zero.
inline constexpr double kNormKinkReach = 32.0;

/// Random small refinement instance. With kink_margin > 0 the state is
/// nudged until every smoothed scalar argument is at least kink_margin away
/// from zero and every smoothed norm at least kNormKinkReach * kink_margin,
/// so a central-difference stencil of half-width h <= kink_margin / 8 stays
/// accurate.
GradcheckInstance random_gradcheck_instance(std::uint64_t seed, int width, int height,
                                            const OptConfig& cfg, double kink_margin);

/// Smallest distance to a kink over all smoothed terms, with norms measured
/// in units of kNormKinkReach.
double min_kink_distance(const GradcheckInstance& inst);

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_rel_depth = 0.0;
  double max_rel_normals = 0.0;
  double max_rel_lambda = 0.0;
  std::string worst;  // parameter with the largest error
  std::size_t parameters = 0;
};

/// |a - f| / max(|a|, |f|, 1e-6).
double gradcheck_relative_error(double analytic, double numeric);

/// Central differences of total_loss for every parameter compared with the
/// analytic gradient.
GradcheckReport finite_diff_gradcheck(const GradcheckInstance& inst, double h);

/// The same comparison for an arbitrary objective f at x.
double central_difference_error(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                                std::span<const double> analytic, double h);

}  // namespace panoalign
