#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "panoalign/graphopt.hpp"
#include "panoalign/parallel.hpp"

namespace panoalign {
namespace {

void require_state_shape(const OptState& state, const Problem& problem) {
  require_same_shape(state.depth, problem.inputs.depth, "state depth");
  require_same_shape(state.normals, problem.inputs.depth, "state normals");
}

// Row-partial sums reduced in row order keep results independent of the
// thread partitioning.
double ordered_sum(const std::vector<double>& rows) { return std::accumulate(rows.begin(), rows.end(), 0.0); }

}  // namespace

double loss_planar(const OptState& state, const Problem& problem, const OptConfig& cfg) {
  require_state_shape(state, problem);
  const NeighborGraph& g = problem.graph;
  const MaskGrid& valid = problem.inputs.valid;
  const int w = problem.width();
  const int h = problem.height();
  const std::size_t k_count = g.edge_count_per_pixel();
  const double eps = cfg.charbonnier_eps;

  std::vector<double> rows(static_cast<std::size_t>(h), 0.0);
  parallel_rows(h, [&](int y) {
    double acc = 0.0;
    for (int x = 0; x < w; ++x) {
      const std::size_t i = valid.index(x, y);
      if (valid[i] == 0) continue;
      const Vec3& ni = state.normals[i];
      const Vec3 pi = state.depth[i] * problem.rays[i];
      for (std::size_t k = 0; k < k_count; ++k) {
        const double wij = g.weight(i, k);
        if (wij == 0.0) continue;
        const auto j = static_cast<std::size_t>(g.neighbor(x, y, k));
        if (valid[j] == 0) continue;
        const Vec3 pj = state.depth[j] * problem.rays[j];
        const double r = ni.dot(pj - pi);
        acc += wij * charbonnier(r, eps);
        acc += cfg.alpha * wij * std::sqrt((state.normals[j] - ni).squaredNorm() + eps * eps);
      }
    }
    rows[static_cast<std::size_t>(y)] = acc;
  });
  return ordered_sum(rows);
}

FidelityLoss loss_fidelity(const OptState& state, const Problem& problem, const OptConfig& cfg) {
  require_state_shape(state, problem);
  const OptInputs& in = problem.inputs;
  const int w = problem.width();
  const int h = problem.height();
  const double eps = cfg.charbonnier_eps;

  std::vector<double> depth_rows(static_cast<std::size_t>(h), 0.0);
  std::vector<double> normal_rows(static_cast<std::size_t>(h), 0.0);
  parallel_rows(h, [&](int y) {
    double ld = 0.0;
    double ln = 0.0;
    for (int x = 0; x < w; ++x) {
      const std::size_t i = in.depth.index(x, y);
      if (in.valid[i] == 0 || problem.confidence[i] == 0) continue;
      const double lambda = state.lambda[in.face_id[i]];
      ld += charbonnier(state.depth[i] - lambda * in.depth[i], eps);
      const Vec3 dn = state.normals[i] - in.normals[i];
      ln += std::sqrt(dn.squaredNorm() + eps * eps);
    }
    depth_rows[static_cast<std::size_t>(y)] = ld;
    normal_rows[static_cast<std::size_t>(y)] = ln;
  });
  return {ordered_sum(depth_rows), ordered_sum(normal_rows)};
}

double combine_losses(double planar, double depth, double normal, const OptConfig& cfg) {
  return cfg.eta_p * planar + cfg.eta_d * depth + cfg.eta_n * normal;
}

LossBreakdown total_loss(const OptState& state, const Problem& problem, const OptConfig& cfg) {
  LossBreakdown out;
  out.planar = loss_planar(state, problem, cfg);
  const FidelityLoss f = loss_fidelity(state, problem, cfg);
  out.depth = f.depth;
  out.normal = f.normal;
  out.total = combine_losses(out.planar, out.depth, out.normal, cfg);
  return out;
}

Gradients gradients(const OptState& state, const Problem& problem, const OptConfig& cfg) {
  require_state_shape(state, problem);
  const NeighborGraph& g = problem.graph;
  const OptInputs& in = problem.inputs;
  const MaskGrid& valid = in.valid;
  const int w = problem.width();
  const int h = problem.height();
  const std::size_t k_count = g.edge_count_per_pixel();
  const double eps = cfg.charbonnier_eps;
  const double eps2 = eps * eps;

  Gradients out{ScalarGrid(w, h, 0.0), VectorGrid(w, h, Vec3::Zero()), {}};
  std::vector<std::array<double, kNumFaces>> lambda_rows(static_cast<std::size_t>(h));

  // Gather form: each pixel collects the terms of the edges it sources and
  // the edges that point at it, so rows can be processed independently.
  parallel_rows(h, [&](int y) {
    std::array<double, kNumFaces> lambda_acc{};
    for (int x = 0; x < w; ++x) {
      const std::size_t i = valid.index(x, y);
      if (valid[i] == 0) continue;
      const Vec3& ni = state.normals[i];
      const Vec3& si = problem.rays[i];
      const Vec3 pi = state.depth[i] * si;
      double d_depth = 0.0;
      Vec3 d_normal = Vec3::Zero();

      for (std::size_t k = 0; k < k_count; ++k) {
        const long long jl = g.neighbor(x, y, k);
        if (jl < 0) continue;
        const auto j = static_cast<std::size_t>(jl);
        if (valid[j] == 0) continue;
        const Vec3& nj = state.normals[j];
        const Vec3 pj = state.depth[j] * problem.rays[j];

        // Edge i -> j.
        const double w_out = g.weight(i, k);
        if (w_out != 0.0) {
          const double r = ni.dot(pj - pi);
          const double gr = cfg.eta_p * w_out * r / std::sqrt(r * r + eps2);
          d_depth -= gr * ni.dot(si);
          d_normal += gr * (pj - pi);
          const Vec3 dn = nj - ni;
          const double gn = cfg.eta_p * cfg.alpha * w_out / std::sqrt(dn.squaredNorm() + eps2);
          d_normal -= gn * dn;
        }

        // Edge j -> i.
        const double w_in = g.weight(j, static_cast<std::size_t>(g.reverse[k]));
        if (w_in != 0.0) {
          const double r = nj.dot(pi - pj);
          const double gr = cfg.eta_p * w_in * r / std::sqrt(r * r + eps2);
          d_depth += gr * nj.dot(si);
          const Vec3 dn = ni - nj;
          const double gn = cfg.eta_p * cfg.alpha * w_in / std::sqrt(dn.squaredNorm() + eps2);
          d_normal += gn * dn;
        }
      }

      if (problem.confidence[i] != 0) {
        const auto face = in.face_id[i];
        const double r = state.depth[i] - state.lambda[face] * in.depth[i];
        const double gr = cfg.eta_d * r / std::sqrt(r * r + eps2);
        d_depth += gr;
        lambda_acc[face] -= gr * in.depth[i];
        const Vec3 dn = state.normals[i] - in.normals[i];
        d_normal += cfg.eta_n * dn / std::sqrt(dn.squaredNorm() + eps2);
      }

      out.depth[i] = d_depth;
      out.normals[i] = d_normal;
    }
    lambda_rows[static_cast<std::size_t>(y)] = lambda_acc;
  });

  for (const auto& row : lambda_rows)
    for (int c = 0; c < kNumFaces; ++c) out.lambda[c] += row[c];

  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    if (!std::isfinite(out.depth[i]) || !out.normals[i].allFinite()) {
      throw Error(ErrorCode::kNonFiniteGradient,
                  "non-finite gradient at pixel " + std::to_string(i) + " (check charbonnier_eps)");
    }
  }
  for (double v : out.lambda) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteGradient, "non-finite per-face scale gradient");
  }
  return out;
}

AdamMoments AdamMoments::zeros_like(const OptState& s) {
  AdamMoments m;
  m.m_depth = ScalarGrid(s.depth.width(), s.depth.height(), 0.0);
  m.v_depth = m.m_depth;
  m.m_normals = VectorGrid(s.normals.width(), s.normals.height(), Vec3::Zero());
  m.v_normals = m.m_normals;
  return m;
}

OptState OptState::from_inputs(const OptInputs& in) {
  OptState s;
  s.depth = in.depth;
  s.normals = in.normals;
  return s;
}

void adam_step(OptState& state, AdamMoments& moments, const Gradients& grads, double lr,
               const OptConfig& cfg, const MaskGrid* valid) {
  require_same_shape(state.depth, grads.depth, "adam_step depth gradient");
  require_same_shape(state.normals, grads.normals, "adam_step normal gradient");
  require_same_shape(state.depth, moments.m_depth, "adam_step moments");
  if (valid != nullptr) require_same_shape(state.depth, *valid, "adam_step valid mask");

  ++moments.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double t = static_cast<double>(moments.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);

  auto update = [&](double& param, double& m, double& v, double grad, double step) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad * grad;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    param -= step * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  };

  // Normal coordinates are taken in each column's yaw frame, so a pixel's
  // update does not depend on where it sits in azimuth.
  const int w = state.depth.width();
  std::vector<double> yaw_c(static_cast<std::size_t>(w));
  std::vector<double> yaw_s(static_cast<std::size_t>(w));
  for (int x = 0; x < w; ++x) {
    const double theta = ((x + 0.5) / w - 0.5) * 2.0 * std::numbers::pi;
    yaw_c[static_cast<std::size_t>(x)] = std::cos(theta);
    yaw_s[static_cast<std::size_t>(x)] = std::sin(theta);
  }

  const double pixel_lr = lr * cfg.step_scale;
  parallel_rows(state.depth.height(), [&](int y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = state.depth.index(x, y);
      if (valid != nullptr && (*valid)[i] == 0) continue;
      update(state.depth[i], moments.m_depth[i], moments.v_depth[i], grads.depth[i], pixel_lr);
      if (state.depth[i] < cfg.min_depth) state.depth[i] = cfg.min_depth;
      const double c = yaw_c[static_cast<std::size_t>(x)];
      const double s = yaw_s[static_cast<std::size_t>(x)];
      auto to_local = [&](const Vec3& v) { return Vec3(c * v.x() - s * v.z(), v.y(), s * v.x() + c * v.z()); };
      Vec3 n = to_local(state.normals[i]);
      const Vec3 g = to_local(grads.normals[i]);
      for (int k = 0; k < 3; ++k) update(n[k], moments.m_normals[i][k], moments.v_normals[i][k], g[k], pixel_lr);
      n = Vec3(c * n.x() + s * n.z(), n.y(), -s * n.x() + c * n.z());
      const double len = n.norm();
      state.normals[i] = len > 0.0 ? Vec3(n / len) : n;
    }
  });
  const double lambda_lr = lr * cfg.lambda_step_scale;
  for (int c = 0; c < kNumFaces; ++c) {
    if (c == cfg.reference_face) continue;
    update(state.lambda[c], moments.m_lambda[c], moments.v_lambda[c], grads.lambda[c], lambda_lr);
    if (state.lambda[c] < cfg.min_lambda) state.lambda[c] = cfg.min_lambda;
  }
}

}  // namespace panoalign
