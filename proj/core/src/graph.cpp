#include <algorithm>
#include <cmath>
#include <string>

#include "panoalign/graphopt.hpp"
#include "panoalign/parallel.hpp"
#include "panoalign/resample.hpp"

namespace panoalign {
namespace {

[[noreturn]] void invalid_field(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::kValidation, "config field '" + field + "' " + why);
}

void require_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) invalid_field(field, "must be positive and finite");
}

void require_non_negative(double v, const char* field) {
  if (!(v >= 0.0) || !std::isfinite(v)) invalid_field(field, "must be non-negative and finite");
}

}  // namespace

int OptConfig::iterations_for_level(int level) const {
  return iterations.at(static_cast<std::size_t>(levels - 1 - level));
}

double OptConfig::lr_for_level(int level) const { return lr_base * std::pow(10.0, level - levels); }

void OptConfig::validate() const {
  require_non_negative(alpha, "alpha");
  require_positive(sigma_int, "sigma_int");
  require_positive(sigma_spa, "sigma_spa");
  require_non_negative(eta_p, "eta_p");
  require_non_negative(eta_d, "eta_d");
  require_non_negative(eta_n, "eta_n");
  if (levels < 1) invalid_field("levels", "must be at least 1");
  if (static_cast<int>(iterations.size()) != levels) {
    invalid_field("iterations", "must list one count per level (" + std::to_string(levels) + ")");
  }
  for (int it : iterations) {
    if (it < 0) invalid_field("iterations", "must be non-negative");
  }
  require_positive(lr_base, "lr_base");
  require_non_negative(charbonnier_eps, "charbonnier_eps");
  if (window_radius < 1) invalid_field("window_radius", "must be at least 1");
  if (patch_size < 1 || patch_size % 2 == 0) invalid_field("patch_size", "must be a positive odd number");
  if (!(mask_threshold >= -1.0 && mask_threshold <= 1.0)) invalid_field("mask_threshold", "must lie in [-1, 1]");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) invalid_field("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) invalid_field("adam_beta2", "must lie in [0, 1)");
  require_positive(adam_eps, "adam_eps");
  require_positive(min_depth, "min_depth");
  require_positive(min_lambda, "min_lambda");
  if (reference_face < -1 || reference_face >= kNumFaces) invalid_field("reference_face", "must be -1 or a face index 0..5");
  require_positive(step_scale, "step_scale");
  require_positive(lambda_step_scale, "lambda_step_scale");
}

long long NeighborGraph::neighbor(int x, int y, std::size_t k) const {
  const int ny = y + offsets[k][1];
  if (ny < 0 || ny >= height) return -1;
  return static_cast<long long>(ny) * width + wrap_x(x + offsets[k][0], width);
}

double patch_distance_sq(const ScalarGrid& intensity, int ax, int ay, int bx, int by, int patch_size) {
  const int half = patch_size / 2;
  const int w = intensity.width();
  const int h = intensity.height();
  double sum = 0.0;
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      const double d = intensity(wrap_x(ax + dx, w), clamp_y(ay + dy, h)) -
                       intensity(wrap_x(bx + dx, w), clamp_y(by + dy, h));
      sum += d * d;
    }
  }
  return sum;
}

NeighborGraph build_graph(const ScalarGrid& intensity, const OptConfig& cfg) {
  cfg.validate();
  const int w = intensity.width();
  const int h = intensity.height();
  const int r = cfg.window_radius;
  if (w < 2 * r + 1) {
    throw Error(ErrorCode::kValidation, "grid width " + std::to_string(w) + " is narrower than the neighbor window");
  }
  for (double v : intensity.values()) {
    if (!(v >= -1e-9 && v <= 1.0 + 1e-9)) {
      throw Error(ErrorCode::kValidation, "intensity must be normalized to [0, 1]");
    }
  }

  NeighborGraph g;
  g.width = w;
  g.height = h;
  g.window_radius = r;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx != 0 || dy != 0) g.offsets.push_back({dx, dy});
  const std::size_t k_count = g.offsets.size();
  g.reverse.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto it = std::find(g.offsets.begin(), g.offsets.end(),
                              std::array<int, 2>{-g.offsets[k][0], -g.offsets[k][1]});
    g.reverse[k] = static_cast<int>(it - g.offsets.begin());
  }

  std::vector<double> spatial(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double d2 = g.offsets[k][0] * g.offsets[k][0] + g.offsets[k][1] * g.offsets[k][1];
    spatial[k] = std::exp(-d2 / (2.0 * cfg.sigma_spa * cfg.sigma_spa));
  }
  const double inv_int = 1.0 / (2.0 * cfg.sigma_int * cfg.sigma_int);

  g.weights.assign(static_cast<std::size_t>(w) * h * k_count, 0.0);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t base = intensity.index(x, y) * k_count;
      for (std::size_t k = 0; k < k_count; ++k) {
        const int ny = y + g.offsets[k][1];
        if (ny < 0 || ny >= h) continue;
        const int nx = wrap_x(x + g.offsets[k][0], w);
        const double q = patch_distance_sq(intensity, x, y, nx, ny, cfg.patch_size);
        g.weights[base + k] = std::exp(-q * inv_int) * spatial[k];
      }
    }
  });
  return g;
}

MaskGrid compute_mask(const ScalarGrid& depth, const VectorGrid& normals, const MaskGrid& valid,
                      const OptConfig& cfg) {
  require_same_shape(depth, normals, "compute_mask normals");
  require_same_shape(depth, valid, "compute_mask valid");
  const NormalField derived = normals_from_depth(depth);
  MaskGrid mask(depth.width(), depth.height(), 0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (valid[i] == 0 || derived.valid[i] == 0) continue;
    const double na = normals[i].norm();
    const double nb = derived.normals[i].norm();
    if (!(na > 0.0 && nb > 0.0)) continue;
    const double cosine = normals[i].dot(derived.normals[i]) / (na * nb);
    mask[i] = cosine >= cfg.mask_threshold ? 1 : 0;
  }
  return mask;
}

void OptInputs::validate() const {
  if (depth.empty()) throw Error(ErrorCode::kValidation, "empty depth input");
  require_same_shape(depth, normals, "normals input");
  require_same_shape(depth, intensity, "intensity input");
  require_same_shape(depth, face_id, "face id input");
  require_same_shape(depth, valid, "valid mask input");
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (face_id[i] >= kNumFaces) throw Error(ErrorCode::kValidation, "face id out of range");
    if (valid[i] == 0) continue;
    if (!(std::isfinite(depth[i]) && depth[i] > 0.0)) {
      throw Error(ErrorCode::kInvalidDepth, "valid pixel " + std::to_string(i) + " has non-positive depth");
    }
  }
}

Problem make_problem(OptInputs inputs, const OptConfig& cfg) {
  inputs.validate();
  Problem p;
  p.graph = build_graph(inputs.intensity, cfg);
  p.confidence = compute_mask(inputs.depth, inputs.normals, inputs.valid, cfg);
  p.rays = erp_ray_grid(inputs.depth.width(), inputs.depth.height());
  p.inputs = std::move(inputs);
  return p;
}

std::vector<LevelPlan> plan_levels(const OptConfig& cfg, int width, int height) {
  cfg.validate();
  std::vector<LevelPlan> plan;
  for (int level = cfg.levels - 1; level >= 0; --level) {
    plan.push_back({level, width >> level, height >> level, cfg.iterations_for_level(level),
                    cfg.lr_for_level(level)});
  }
  return plan;
}

OptInputs downsample_inputs(const OptInputs& in, int level) {
  if (level == 0) return in;
  const int f = 1 << level;
  OptInputs out;
  out.depth = downsample(in.depth, f, &in.valid);
  out.normals = downsample(in.normals, f, &in.valid);
  out.intensity = downsample(in.intensity, f);
  out.face_id = downsample_labels(in.face_id, f);
  out.valid = downsample_mask(in.valid, f);
  return out;
}

}  // namespace panoalign
