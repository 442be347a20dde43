#include "panoalign/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_set>

#include "panoalign/kdtree.hpp"
#include "panoalign/rng.hpp"

namespace panoalign {
namespace {

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

void require_cloud(const PointCloud& c, const char* what) {
  if (c.empty()) throw Error(ErrorCode::kEmptyCloud, std::string(what) + " point cloud is empty");
}

// Distance from every point of `from` to its nearest neighbor in `to`.
std::vector<double> directed_distances(const PointCloud& from, const PointCloud& to) {
  const KdTree tree(to.points);
  std::vector<double> d(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) d[i] = tree.nearest(from.points[i]).distance;
  return d;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct VoxelHash {
  std::size_t operator()(const std::array<long long, 3>& k) const noexcept {
    std::size_t h = 1469598103934665603ULL;
    for (long long v : k) {
      h ^= static_cast<std::size_t>(v);
      h *= 1099511628211ULL;
    }
    return h;
  }
};

using VoxelSet = std::unordered_set<std::array<long long, 3>, VoxelHash>;

VoxelSet voxelize(const PointCloud& c, double voxel) {
  VoxelSet set;
  set.reserve(c.size());
  for (const Vec3& p : c.points) {
    set.insert({static_cast<long long>(std::floor(p.x() / voxel)), static_cast<long long>(std::floor(p.y() / voxel)),
                static_cast<long long>(std::floor(p.z() / voxel))});
  }
  return set;
}

}  // namespace

void EvalConfig::validate() const {
  if (!(fscore_tau > 0.0)) throw Error(ErrorCode::kValidation, "eval field 'fscore_tau' must be positive");
  if (!(voxel_size > 0.0)) throw Error(ErrorCode::kValidation, "eval field 'voxel_size' must be positive");
  if (max_points == 0) throw Error(ErrorCode::kValidation, "eval field 'max_points' must be positive");
}

MaskGrid overlap_mask(const ScalarGrid& pred, const ScalarGrid& gt, const MaskGrid* mask) {
  require_same_shape(pred, gt, "prediction vs ground truth");
  if (mask != nullptr) require_same_shape(pred, *mask, "evaluation mask");
  MaskGrid valid(pred.width(), pred.height(), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool ok = std::isfinite(pred[i]) && pred[i] > 0.0 && std::isfinite(gt[i]) && gt[i] > 0.0 &&
                    (mask == nullptr || (*mask)[i] != 0);
    valid[i] = ok ? 1 : 0;
  }
  return valid;
}

AlignedDepth median_align(const ScalarGrid& pred, const ScalarGrid& gt, const MaskGrid& valid) {
  require_same_shape(pred, gt, "median_align");
  require_same_shape(pred, valid, "median_align mask");
  std::vector<double> p;
  std::vector<double> g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (valid[i] == 0) continue;
    p.push_back(pred[i]);
    g.push_back(gt[i]);
  }
  if (p.empty()) throw Error(ErrorCode::kEmptyOverlap, "no valid pixel shared by prediction and ground truth");
  AlignedDepth out{pred, median_of(std::move(g)) / median_of(std::move(p))};
  for (auto& v : out.depth.values()) v *= out.scale;
  return out;
}

DepthMetrics metrics_2d(const ScalarGrid& pred, const ScalarGrid& gt, const MaskGrid& valid) {
  require_same_shape(pred, gt, "metrics_2d");
  require_same_shape(pred, valid, "metrics_2d mask");
  DepthMetrics m;
  double abs_rel = 0.0;
  double sq = 0.0;
  std::array<std::size_t, 3> within{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (valid[i] == 0 || !(gt[i] > 0.0)) continue;
    const double p = pred[i];
    const double g = gt[i];
    abs_rel += std::abs(p - g) / g;
    sq += (p - g) * (p - g);
    const double ratio = std::max(p / g, g / p);
    double threshold = 1.25;
    for (std::size_t k = 0; k < 3; ++k, threshold *= 1.25) {
      if (ratio < threshold) ++within[k];
    }
    ++m.count;
  }
  if (m.count == 0) throw Error(ErrorCode::kEmptyOverlap, "no valid pixel for 2D metrics");
  const auto n = static_cast<double>(m.count);
  m.abs_rel = abs_rel / n;
  m.rmse = std::sqrt(sq / n);
  m.delta1 = static_cast<double>(within[0]) / n;
  m.delta2 = static_cast<double>(within[1]) / n;
  m.delta3 = static_cast<double>(within[2]) / n;
  return m;
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  require_cloud(a, "first");
  require_cloud(b, "second");
  return mean(directed_distances(a, b)) + mean(directed_distances(b, a));
}

double fscore(const PointCloud& a, const PointCloud& b, double tau) {
  require_cloud(a, "first");
  require_cloud(b, "second");
  auto fraction_within = [tau](const std::vector<double>& d) {
    const auto hits = std::count_if(d.begin(), d.end(), [tau](double v) { return v < tau; });
    return static_cast<double>(hits) / static_cast<double>(d.size());
  };
  const double precision = fraction_within(directed_distances(a, b));
  const double recall = fraction_within(directed_distances(b, a));
  if (precision + recall == 0.0) return 0.0;
  return 200.0 * precision * recall / (precision + recall);
}

double voxel_iou(const PointCloud& a, const PointCloud& b, double voxel) {
  require_cloud(a, "first");
  require_cloud(b, "second");
  if (!(voxel > 0.0)) throw Error(ErrorCode::kValidation, "voxel size must be positive");
  const VoxelSet va = voxelize(a, voxel);
  const VoxelSet vb = voxelize(b, voxel);
  std::size_t inter = 0;
  for (const auto& k : va) inter += vb.count(k);
  const std::size_t uni = va.size() + vb.size() - inter;
  return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

PointCloud subsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed) {
  if (cloud.size() <= max_points) return cloud;
  const CounterRng rng(seed, 7);
  std::vector<std::size_t> idx(cloud.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < max_points; ++i) {
    const std::size_t span = idx.size() - i;
    const auto pick = i + static_cast<std::size_t>(rng.uniform(i) * static_cast<double>(span));
    std::swap(idx[i], idx[std::min(pick, idx.size() - 1)]);
  }
  idx.resize(max_points);
  std::sort(idx.begin(), idx.end());
  PointCloud out;
  out.points.reserve(max_points);
  for (std::size_t i : idx) {
    out.points.push_back(cloud.points[i]);
    if (!cloud.colors.empty()) out.colors.push_back(cloud.colors[i]);
  }
  return out;
}

MetricReport evaluate(const ScalarGrid& pred, const ScalarGrid& gt, const EvalConfig& cfg, bool with_2d,
                      bool with_3d, const MaskGrid* mask) {
  cfg.validate();
  const MaskGrid valid = overlap_mask(pred, gt, mask);
  const AlignedDepth aligned = median_align(pred, gt, valid);
  MetricReport r;
  r.config = cfg;
  r.aligned_scale = aligned.scale;
  if (with_2d) {
    const DepthMetrics m = metrics_2d(aligned.depth, gt, valid);
    r.abs_rel = m.abs_rel;
    r.rmse = m.rmse;
    r.delta1 = m.delta1;
    r.delta2 = m.delta2;
    r.delta3 = m.delta3;
    r.has_2d = true;
  }
  r.valid_pixel_count = 0;
  for (auto v : valid.values()) r.valid_pixel_count += v;
  if (with_3d) {
    const PointCloud p = subsample(lift_points(aligned.depth, &valid), cfg.max_points, cfg.seed);
    const PointCloud g = subsample(lift_points(gt, &valid), cfg.max_points, cfg.seed);
    r.chamfer = chamfer(p, g);
    r.fscore = fscore(p, g, cfg.fscore_tau);
    r.iou = voxel_iou(p, g, cfg.voxel_size);
    r.has_3d = true;
  }
  return r;
}

}  // namespace panoalign
