#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "panoalign/geometry.hpp"
#include "panoalign/grid.hpp"

namespace panoalign {

/// Every tunable of the joint depth / normal / per-face scale refinement.
/// Defaults reproduce the published settings.
struct OptConfig {
  double alpha = 0.5;        // weight of normal smoothness inside the planar loss
  double sigma_int = 0.07;   // patch-intensity bandwidth of the edge weights
  double sigma_spa = 3.0;    // spatial bandwidth of the edge weights, pixels
  double eta_p = 50.0;
  double eta_d = 0.5;
  double eta_n = 10.0;
  int levels = 3;
  std::vector<int> iterations = {300, 150, 30};  // coarsest level first
  double lr_base = 5.0;      // lr at level l is lr_base * 10^(l - levels)
  double charbonnier_eps = 1e-6;
  int window_radius = 2;
  int patch_size = 3;
  double mask_threshold = 0.7;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double min_depth = 1e-4;
  double min_lambda = 1e-4;
  // Optimizer parameterization. The loss is unaffected by these.
  int reference_face = 0;        // lambda of this face is held at 1 (-1: all free)
  double step_scale = 0.004;     // pixel variables step with lr * step_scale
  double lambda_step_scale = 0.04;
  bool normalize_depth = true;   // optimize D / median(D-bar), rescale on exit
  bool scale_relative = true;    // Adam runs on D / lambda_face instead of D
  bool residual_handoff = true;  // upsample D / (lambda D-bar) and n - n-bar between levels

  /// Iteration count for pyramid level l (0 = full resolution).
  int iterations_for_level(int level) const;
  double lr_for_level(int level) const;

  /// Throws ValidationError naming the first offending field.
  void validate() const;
};

/// Smoothed absolute value sqrt(x^2 + eps^2).
inline double charbonnier(double x, double eps) { return std::sqrt(x * x + eps * eps); }

/// Pixel graph with precomputed bilateral edge weights. Edge k of pixel i
/// joins i to i + offsets[k] (column wrapped, row unclamped); edges leaving
/// the top or bottom row have weight 0 and are skipped.
struct NeighborGraph {
  int width = 0;
  int height = 0;
  int window_radius = 0;
  std::vector<std::array<int, 2>> offsets;  // (dx, dy), center excluded
  std::vector<int> reverse;                 // index of -offsets[k]
  std::vector<double> weights;              // width * height * offsets.size()

  std::size_t edge_count_per_pixel() const noexcept { return offsets.size(); }
  double weight(std::size_t pixel, std::size_t k) const { return weights[pixel * offsets.size() + k]; }
  /// Neighbor of pixel (x, y) along edge k, or -1 when the row leaves the grid.
  long long neighbor(int x, int y, std::size_t k) const;
};

/// Edge weights exp(-|Q_i - Q_j|_F^2 / 2 sigma_int^2) * exp(-|i - j|^2 / 2 sigma_spa^2)
/// over a (2r+1)^2 window. Intensities must lie in [0, 1].
NeighborGraph build_graph(const ScalarGrid& intensity, const OptConfig& cfg);

/// Squared Frobenius distance between the intensity patches centered at a and b.
double patch_distance_sq(const ScalarGrid& intensity, int ax, int ay, int bx, int by, int patch_size);

/// 1 where the ingested normal agrees with the depth-derived normal
/// (cosine >= mask_threshold) and the pixel is valid.
MaskGrid compute_mask(const ScalarGrid& depth, const VectorGrid& normals, const MaskGrid& valid,
                      const OptConfig& cfg);

/// Merged inputs of one refinement run.
struct OptInputs {
  ScalarGrid depth;      // merged radial depth D-bar
  VectorGrid normals;    // merged world normals n-bar
  ScalarGrid intensity;  // grayscale in [0, 1] driving the edge weights
  FaceIdMap face_id;
  MaskGrid valid;        // pixels excluded from every sum when 0

  void validate() const;
};

/// Inputs plus everything derived from them at one resolution.
struct Problem {
  OptInputs inputs;
  NeighborGraph graph;
  MaskGrid confidence;
  VectorGrid rays;

  int width() const noexcept { return inputs.depth.width(); }
  int height() const noexcept { return inputs.depth.height(); }
};

Problem make_problem(OptInputs inputs, const OptConfig& cfg);

struct OptState {
  ScalarGrid depth;
  VectorGrid normals;
  std::array<double, kNumFaces> lambda{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

  /// D = D-bar, n = n-bar, lambda = 1.
  static OptState from_inputs(const OptInputs& in);
};

struct AdamMoments {
  ScalarGrid m_depth, v_depth;
  VectorGrid m_normals, v_normals;
  std::array<double, kNumFaces> m_lambda{}, v_lambda{};
  long long step = 0;

  static AdamMoments zeros_like(const OptState& s);
};

struct LossBreakdown {
  double planar = 0.0;
  double depth = 0.0;
  double normal = 0.0;
  double total = 0.0;
};

struct Gradients {
  ScalarGrid depth;
  VectorGrid normals;
  std::array<double, kNumFaces> lambda{};
};

double loss_planar(const OptState& state, const Problem& problem, const OptConfig& cfg);

/// Smoothed |D - lambda * D-bar| and smoothed Euclidean |n - n-bar| over
/// confident pixels.
struct FidelityLoss {
  double depth = 0.0;
  double normal = 0.0;
};
FidelityLoss loss_fidelity(const OptState& state, const Problem& problem, const OptConfig& cfg);

/// eta_p * L_p + eta_d * L_d + eta_n * L_n.
double combine_losses(double planar, double depth, double normal, const OptConfig& cfg);
LossBreakdown total_loss(const OptState& state, const Problem& problem, const OptConfig& cfg);

/// Exact gradient of total_loss. Throws NonFiniteGradient on any non-finite entry.
Gradients gradients(const OptState& state, const Problem& problem, const OptConfig& cfg);

/// One bias-corrected Adam update, then normals renormalized and depth /
/// lambda clamped from below. Pixel variables use lr * step_scale, lambda
/// uses lr * lambda_step_scale. Invalid pixels are left untouched. Normal
/// moments are kept in each column's yaw frame.
void adam_step(OptState& state, AdamMoments& moments, const Gradients& grads, double lr,
               const OptConfig& cfg, const MaskGrid* valid = nullptr);

struct LevelReport {
  int level = 0;
  int width = 0;
  int height = 0;
  int iterations = 0;
  double lr = 0.0;
  LossBreakdown initial;
  LossBreakdown final;
  std::array<double, kNumFaces> lambda{};
  double seconds = 0.0;
};

struct OptResult {
  OptState state;
  std::vector<LevelReport> levels;
};

struct OptHooks {
  /// Called after every Adam step with (level, iteration, state).
  std::function<void(int, int, const OptState&)> on_step;
  /// Throw Diverged when a level ends above its starting loss.
  bool fail_on_divergence = true;
};

/// Coarse-to-fine refinement over levels L-1 .. 0. Each level rebuilds the
/// graph and confidence mask from downsampled inputs, starts from the
/// upsampled previous solution (D-bar, n-bar, lambda = 1 at the coarsest)
/// and runs a fresh Adam for the level's iteration count. With
/// normalize_depth the level losses are reported in normalized depth units.
OptResult optimize(const OptInputs& inputs, const OptConfig& cfg, const OptHooks& hooks = {});

struct LevelPlan {
  int level = 0;
  int width = 0;
  int height = 0;
  int iterations = 0;
  double lr = 0.0;
};

/// Pyramid schedule for a width x height input, coarsest level first.
std::vector<LevelPlan> plan_levels(const OptConfig& cfg, int width, int height);

/// Inputs reduced by 2^level for pyramid level `level`.
OptInputs downsample_inputs(const OptInputs& in, int level);

}  // namespace panoalign
