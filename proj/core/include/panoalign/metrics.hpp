#pragma once

#include <cstdint>
#include <string>

#include "panoalign/geometry.hpp"
#include "panoalign/grid.hpp"

namespace panoalign {

struct EvalConfig {
  double fscore_tau = 0.1;   // meters
  double voxel_size = 0.1;   // meters
  std::size_t max_points = 100000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Chamfer convention stored with every report.
inline constexpr const char* kChamferConvention = "sum_of_directed_means";

struct MetricReport {
  double abs_rel = 0.0;
  double rmse = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double chamfer = 0.0;  // meters
  double fscore = 0.0;   // percent
  double iou = 0.0;      // percent
  double aligned_scale = 1.0;
  std::size_t valid_pixel_count = 0;
  bool has_2d = false;
  bool has_3d = false;
  EvalConfig config;
};

struct AlignedDepth {
  ScalarGrid depth;
  double scale = 1.0;
};

/// Pixels where both maps hold finite positive depth (and the optional mask is set).
MaskGrid overlap_mask(const ScalarGrid& pred, const ScalarGrid& gt, const MaskGrid* mask = nullptr);

/// Rescales pred by median(gt) / median(pred) over the valid pixels.
/// Throws EmptyOverlap when no pixel is valid.
AlignedDepth median_align(const ScalarGrid& pred, const ScalarGrid& gt, const MaskGrid& valid);

struct DepthMetrics {
  double abs_rel = 0.0;
  double rmse = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t count = 0;
};

/// AbsRel, RMSE and the fraction with max(p/g, g/p) < 1.25^k.
DepthMetrics metrics_2d(const ScalarGrid& pred, const ScalarGrid& gt, const MaskGrid& valid);

/// Sum of the two directed mean nearest-neighbor distances.
double chamfer(const PointCloud& a, const PointCloud& b);

/// 200 PR / (P + R) in percent, with matches within tau.
double fscore(const PointCloud& a, const PointCloud& b, double tau);

/// |A and B| / |A or B| * 100 over voxels floor(p / voxel) anchored at the origin.
double voxel_iou(const PointCloud& a, const PointCloud& b, double voxel);

/// Uniform subsample of at most max_points, order-preserving and seeded.
PointCloud subsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed);

/// Full report: median alignment, 2D metrics, then 3D metrics on the lifted
/// clouds (subsampled per config).
MetricReport evaluate(const ScalarGrid& pred, const ScalarGrid& gt, const EvalConfig& cfg,
                      bool with_2d = true, bool with_3d = true, const MaskGrid* mask = nullptr);

}  // namespace panoalign
