#include <algorithm>
#include <chrono>
#include <sstream>

#include "panoalign/graphopt.hpp"
#include "panoalign/resample.hpp"

namespace panoalign {
namespace {

// Componentwise bilinear upsampling without renormalization.
VectorGrid upsample_components(const VectorGrid& g, int w, int h) {
  VectorGrid out(w, h);
  ScalarGrid comp(g.width(), g.height());
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < g.size(); ++i) comp[i] = g[i][c];
    const ScalarGrid up = upsample(comp, w, h);
    for (std::size_t i = 0; i < out.size(); ++i) out[i][c] = up[i];
  }
  return out;
}

double median_valid_depth(const OptInputs& in) {
  std::vector<double> d;
  d.reserve(in.depth.size());
  for (std::size_t i = 0; i < in.depth.size(); ++i) {
    if (in.valid[i]) d.push_back(in.depth[i]);
  }
  if (d.empty()) throw Error(ErrorCode::kValidation, "no valid depth pixels to refine");
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

// Carries a coarse solution to the next level. The residual form keeps the
// fine inputs' edges and only interpolates the correction.
void hand_off(OptState& state, const OptInputs& coarse, const OptInputs& fine, const OptConfig& cfg) {
  const int w = fine.depth.width();
  const int h = fine.depth.height();
  if (cfg.residual_handoff) {
    ScalarGrid ratio(coarse.depth.width(), coarse.depth.height(), 1.0);
    VectorGrid dn(coarse.depth.width(), coarse.depth.height(), Vec3::Zero());
    for (std::size_t i = 0; i < ratio.size(); ++i) {
      if (!coarse.valid[i]) continue;
      ratio[i] = state.depth[i] / (coarse.depth[i] * state.lambda[coarse.face_id[i]]);
      dn[i] = state.normals[i] - coarse.normals[i];
    }
    ratio = upsample(ratio, w, h);
    dn = upsample_components(dn, w, h);
    state.depth = fine.depth;
    state.normals = fine.normals;
    for (std::size_t i = 0; i < ratio.size(); ++i) {
      state.depth[i] = std::max(cfg.min_depth, state.depth[i] * ratio[i] * state.lambda[fine.face_id[i]]);
      const Vec3 n = state.normals[i] + dn[i];
      if (n.norm() > 0.0) state.normals[i] = n.normalized();
    }
  } else {
    state.depth = upsample(state.depth, w, h);
    state.normals = upsample(state.normals, w, h);
  }
  // Pixels invalid at this scale keep their input values.
  for (std::size_t i = 0; i < state.depth.size(); ++i) {
    if (fine.valid[i] == 0) {
      state.depth[i] = fine.depth[i];
      state.normals[i] = fine.normals[i];
    }
  }
}

// Adam on (D / lambda_face, n, lambda): a face's scale moves as one unit.
void scale_relative_step(OptState& state, AdamMoments& moments, Gradients& grads, double lr,
                         const Problem& problem, const OptConfig& cfg) {
  const auto& fid = problem.inputs.face_id;
  const auto& valid = problem.inputs.valid;
  OptState rel = state;
  for (std::size_t i = 0; i < state.depth.size(); ++i) {
    if (!valid[i]) continue;
    const double lam = state.lambda[fid[i]];
    rel.depth[i] = state.depth[i] / lam;
    grads.lambda[fid[i]] += rel.depth[i] * grads.depth[i];
    grads.depth[i] *= lam;
  }
  adam_step(rel, moments, grads, lr, cfg, &valid);
  state.normals = std::move(rel.normals);
  state.lambda = rel.lambda;
  for (std::size_t i = 0; i < state.depth.size(); ++i) {
    if (valid[i]) state.depth[i] = std::max(cfg.min_depth, rel.depth[i] * rel.lambda[fid[i]]);
  }
}

}  // namespace

OptResult optimize(const OptInputs& inputs, const OptConfig& cfg, const OptHooks& hooks) {
  cfg.validate();
  inputs.validate();
  const int levels = cfg.levels;
  if ((inputs.depth.height() >> (levels - 1)) < 1 ||
      (inputs.depth.width() >> (levels - 1)) < 2 * cfg.window_radius + 1) {
    throw Error(ErrorCode::kValidation, "input too small for " + std::to_string(levels) + " pyramid levels");
  }

  double unit = 1.0;
  OptInputs scaled;
  const OptInputs* source = &inputs;
  if (cfg.normalize_depth) {
    unit = median_valid_depth(inputs);
    scaled = inputs;
    for (double& d : scaled.depth.values()) d /= unit;
    source = &scaled;
  }

  OptResult result;
  OptState state;
  OptInputs prev;
  for (int level = levels - 1; level >= 0; --level) {
    const auto start = std::chrono::steady_clock::now();
    Problem problem = make_problem(downsample_inputs(*source, level), cfg);
    const int w = problem.width();
    const int h = problem.height();

    if (level == levels - 1) {
      state = OptState::from_inputs(problem.inputs);
    } else {
      hand_off(state, prev, problem.inputs, cfg);
    }

    LevelReport report;
    report.level = level;
    report.width = w;
    report.height = h;
    report.iterations = cfg.iterations_for_level(level);
    report.lr = cfg.lr_for_level(level);
    report.initial = total_loss(state, problem, cfg);

    AdamMoments moments = AdamMoments::zeros_like(state);
    for (int it = 0; it < report.iterations; ++it) {
      Gradients grads = gradients(state, problem, cfg);
      if (cfg.scale_relative) {
        scale_relative_step(state, moments, grads, report.lr, problem, cfg);
      } else {
        adam_step(state, moments, grads, report.lr, cfg, &problem.inputs.valid);
      }
      if (hooks.on_step) hooks.on_step(level, it, state);
    }

    report.final = total_loss(state, problem, cfg);
    report.lambda = state.lambda;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.levels.push_back(report);
    prev = std::move(problem.inputs);

    if (hooks.fail_on_divergence && report.final.total > report.initial.total) {
      std::ostringstream msg;
      msg << "level " << level << " (" << w << "x" << h << ") ended at loss " << report.final.total
          << " above its initial " << report.initial.total;
      throw Error(ErrorCode::kDiverged, msg.str());
    }
  }
  if (unit != 1.0) {
    for (double& d : state.depth.values()) d *= unit;
  }
  result.state = std::move(state);
  return result;
}

}  // namespace panoalign
