#include "panoalign/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "panoalign/parallel.hpp"
#include "panoalign/rng.hpp"

namespace panoalign {
namespace {

constexpr std::array<double, 6> kWallAlbedo = {0.15, 0.3, 0.45, 0.6, 0.75, 0.9};
constexpr double kSphereAlbedo = 0.5;

// Streams keep the noise of different quantities independent.
constexpr std::uint64_t kDepthNoiseStream = 1;
constexpr std::uint64_t kNormalNoiseStream = 2;

Vec3 any_perpendicular(const Vec3& n) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return n.cross(helper).normalized();
}

}  // namespace

void SceneSpec::validate() const {
  if (erp_width <= 0 || erp_width % 2 != 0) {
    throw Error(ErrorCode::kValidation, "scene erp width must be positive and even");
  }
  if (!camera.allFinite()) throw Error(ErrorCode::kValidation, "scene camera must be finite");
  if (kind == SceneKind::kBox) {
    for (int k = 0; k < 3; ++k) {
      if (!(half_extents[k] > 0.0)) throw Error(ErrorCode::kValidation, "box half-extents must be positive");
      if (!(std::abs(camera[k]) < half_extents[k])) {
        throw Error(ErrorCode::kValidation, "camera must lie strictly inside the box");
      }
    }
  } else {
    if (!(radius > 0.0)) throw Error(ErrorCode::kValidation, "sphere radius must be positive");
    if (!(camera.norm() < radius)) throw Error(ErrorCode::kValidation, "camera must lie strictly inside the sphere");
  }
}

SurfaceHit trace(const SceneSpec& scene, const UnitRay& ray) {
  const Vec3& s = ray.s;
  const Vec3& c = scene.camera;
  SurfaceHit hit;
  if (scene.kind == SceneKind::kBox) {
    hit.distance = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      if (s[k] == 0.0) continue;
      const double plane = s[k] > 0.0 ? scene.half_extents[k] : -scene.half_extents[k];
      const double t = (plane - c[k]) / s[k];
      if (t < hit.distance) {
        hit.distance = t;
        hit.surface = 2 * k + (s[k] > 0.0 ? 0 : 1);
        hit.normal = Vec3::Zero();
        hit.normal[k] = s[k] > 0.0 ? -1.0 : 1.0;
      }
    }
    hit.albedo = kWallAlbedo[static_cast<std::size_t>(hit.surface)];
    return hit;
  }
  const double b = c.dot(s);
  const double q = c.squaredNorm() - scene.radius * scene.radius;
  hit.distance = -b + std::sqrt(b * b - q);
  hit.normal = -(c + hit.distance * s) / scene.radius;
  hit.albedo = kSphereAlbedo;
  hit.surface = 0;
  return hit;
}

SceneRender render_scene(const SceneSpec& scene) {
  scene.validate();
  const int w = scene.erp_width;
  const int h = w / 2;
  SceneRender out{ScalarGrid(w, h), VectorGrid(w, h), ScalarGrid(w, h), Grid<std::uint8_t>(w, h)};
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const SurfaceHit hit = trace(scene, erp_pixel_ray(x, y, w, h));
      out.depth(x, y) = hit.distance;
      out.normals(x, y) = hit.normal;
      out.intensity(x, y) = hit.albedo;
      out.surface(x, y) = static_cast<std::uint8_t>(hit.surface);
    }
  });
  return out;
}

void Corruption::validate() const {
  for (double s : scales) {
    if (!(s >= 0.5 && s <= 2.0)) throw Error(ErrorCode::kValidation, "per-face scales must lie in [0.5, 2.0]");
  }
  if (!(normal_noise_deg >= 0.0) || !(depth_noise >= 0.0)) {
    throw Error(ErrorCode::kValidation, "noise levels must be non-negative");
  }
}

CorruptedFaces corrupt(const SceneSpec& scene, const CameraModel& cam, const Corruption& c,
                       std::uint64_t seed) {
  scene.validate();
  c.validate();
  CorruptedFaces out(cam);
  const int n = cam.face_size();
  const CounterRng depth_rng(seed, kDepthNoiseStream);
  const CounterRng normal_rng(seed, kNormalNoiseStream);
  const double noise_rad = c.normal_noise_deg * std::numbers::pi / 180.0;

  for (int f = 0; f < kNumFaces; ++f) {
    auto& depth = out.depth.faces[static_cast<std::size_t>(f)];
    auto& normals = out.normals.faces[static_cast<std::size_t>(f)];
    const Mat3 to_face = cam.rotation(f).transpose();
    parallel_rows(n, [&](int j) {
      for (int i = 0; i < n; ++i) {
        const PixelCoord p{i + 0.5, j + 0.5};
        const UnitRay ray = cam.pixel_ray(f, p);
        const SurfaceHit hit = trace(scene, ray);
        const auto counter = static_cast<std::uint64_t>((f * n + j) * n + i);

        double z = hit.distance / rho_factor(p, cam) * c.scales[static_cast<std::size_t>(f)];
        if (c.depth_noise > 0.0) z *= 1.0 + c.depth_noise * depth_rng.normal(counter);
        depth(i, j) = z;

        Vec3 normal = hit.normal;
        if (noise_rad > 0.0) {
          const double angle = noise_rad * normal_rng.normal(2 * counter);
          const double spin = 2.0 * std::numbers::pi * normal_rng.uniform(4 * counter + 2);
          const Vec3 u = any_perpendicular(normal);
          const Vec3 v = normal.cross(u);
          const Vec3 axis = std::cos(spin) * u + std::sin(spin) * v;
          normal = Eigen::AngleAxisd(angle, axis) * normal;
        }
        normals(i, j) = to_face * normal;
      }
    });
  }
  return out;
}

OptInputs merged_oracle_inputs(const SceneSpec& scene, const CameraModel& cam, const Corruption& c,
                               std::uint64_t seed) {
  const CorruptedFaces faces = corrupt(scene, cam, c, seed);
  MergedDepth merged = merge_depth_to_erp(faces.depth, scene.erp_width);
  MergedNormals normals = merge_normals_to_erp(faces.normals, merged.face_id);
  SceneRender gt = render_scene(scene);

  OptInputs in;
  in.depth = std::move(merged.depth);
  in.normals = std::move(normals.normals);
  in.intensity = std::move(gt.intensity);
  in.face_id = std::move(merged.face_id);
  in.valid = std::move(merged.valid);
  for (std::size_t i = 0; i < in.valid.size(); ++i) in.valid[i] = in.valid[i] & normals.valid[i];
  return in;
}

namespace {

struct Kink {
  enum class Kind { kPlanar, kDepth, kNormal, kNormalDiff } kind;
  std::size_t i = 0;
  std::size_t j = 0;
  double value = 0.0;

  bool is_norm() const { return kind == Kind::kNormal || kind == Kind::kNormalDiff; }
  // Distance to the kink in units of the scalar margin.
  double distance() const { return std::abs(value) / (is_norm() ? kNormKinkReach : 1.0); }
};

template <typename Visitor>
void visit_kinks(const GradcheckInstance& inst, Visitor&& visit) {
  const Problem& p = inst.problem;
  const OptState& s = inst.state;
  const NeighborGraph& g = p.graph;
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) {
      const std::size_t i = p.inputs.depth.index(x, y);
      if (p.inputs.valid[i] == 0) continue;
      for (std::size_t k = 0; k < g.edge_count_per_pixel(); ++k) {
        if (g.weight(i, k) == 0.0) continue;
        const auto j = static_cast<std::size_t>(g.neighbor(x, y, k));
        if (p.inputs.valid[j] == 0) continue;
        const double r = s.normals[i].dot(s.depth[j] * p.rays[j] - s.depth[i] * p.rays[i]);
        visit(Kink{Kink::Kind::kPlanar, i, j, r});
        visit(Kink{Kink::Kind::kNormalDiff, i, j, (s.normals[j] - s.normals[i]).norm()});
      }
      if (p.confidence[i] == 0) continue;
      visit(Kink{Kink::Kind::kDepth, i, i,
                 s.depth[i] - s.lambda[p.inputs.face_id[i]] * p.inputs.depth[i]});
      visit(Kink{Kink::Kind::kNormal, i, i, (s.normals[i] - p.inputs.normals[i]).norm()});
    }
  }
}

}  // namespace

double min_kink_distance(const GradcheckInstance& inst) {
  double best = std::numeric_limits<double>::infinity();
  visit_kinks(inst, [&](const Kink& k) { best = std::min(best, k.distance()); });
  return best;
}

void require_gradcheck_size(int width, int height) {
  if (width < 2 || height < 2 || width > kMaxGradcheckWidth || height > kMaxGradcheckHeight) {
    throw Error(ErrorCode::kValidation, "gradient check instances must be between 2x2 and " +
                                            std::to_string(kMaxGradcheckWidth) + "x" +
                                            std::to_string(kMaxGradcheckHeight) + ", got " + std::to_string(width) +
                                            "x" + std::to_string(height));
  }
}

GradcheckInstance random_gradcheck_instance(std::uint64_t seed, int width, int height,
                                            const OptConfig& cfg, double kink_margin) {
  require_gradcheck_size(width, height);
  const CounterRng rng(seed, 0);
  std::uint64_t counter = 0;
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(counter++); };
  auto gaussian = [&] { return rng.normal(counter++); };

  OptInputs in;
  in.depth = ScalarGrid(width, height);
  in.normals = VectorGrid(width, height);
  in.intensity = ScalarGrid(width, height);
  in.valid = MaskGrid(width, height, 1);
  in.face_id = build_face_id_map(width, height, CameraModel::cubemap(std::max(1, height / 2)));
  const VectorGrid rays = erp_ray_grid(width, height);
  for (std::size_t i = 0; i < in.depth.size(); ++i) {
    in.depth[i] = uniform(1.0, 3.0);
    in.normals[i] = (-rays[i] + 0.6 * Vec3(gaussian(), gaussian(), gaussian())).normalized();
    in.intensity[i] = 0.5 + 0.03 * uniform(-1.0, 1.0);
  }

  GradcheckInstance inst{make_problem(std::move(in), cfg), OptState{}, cfg};
  for (auto& m : inst.problem.confidence.values()) m = uniform(0.0, 1.0) < 0.75 ? 1 : 0;

  OptState& s = inst.state;
  const OptInputs& base = inst.problem.inputs;
  s.depth = base.depth;
  s.normals = base.normals;
  for (std::size_t i = 0; i < s.depth.size(); ++i) {
    s.depth[i] *= uniform(0.8, 1.2);
    s.normals[i] = (s.normals[i] + 0.3 * Vec3(gaussian(), gaussian(), gaussian())).normalized();
  }
  for (auto& l : s.lambda) l = uniform(0.7, 1.3);

  if (kink_margin <= 0.0) return inst;

  // Push every smoothed-absolute argument out of [-margin, margin] and every
  // smoothed norm beyond kNormKinkReach * margin.
  const double push = 3.0 * kink_margin;
  const double norm_push = push * kNormKinkReach;
  for (int round = 0; round < 1000; ++round) {
    bool clean = true;
    visit_kinks(inst, [&](const Kink& k) {
      if (k.distance() >= kink_margin) return;
      clean = false;
      const double sign = k.value >= 0.0 ? 1.0 : -1.0;
      switch (k.kind) {
        case Kink::Kind::kPlanar: {
          const Vec3& ni = s.normals[k.i];
          const double cj = ni.dot(inst.problem.rays[k.j]);
          const double ci = ni.dot(inst.problem.rays[k.i]);
          if (std::abs(cj) > 0.1) {
            s.depth[k.j] += sign * push / cj;
          } else if (std::abs(ci) > 0.1) {
            s.depth[k.i] -= sign * push / ci;
          } else {
            s.depth[k.j] *= 1.05;
          }
          break;
        }
        case Kink::Kind::kDepth:
          s.depth[k.i] += sign * push;
          break;
        case Kink::Kind::kNormal:
          s.normals[k.i] += Vec3(norm_push, -norm_push, norm_push);
          break;
        case Kink::Kind::kNormalDiff:
          s.normals[k.j] += Vec3(norm_push, -norm_push, norm_push);
          break;
      }
    });
    if (clean) return inst;
  }
  throw Error(ErrorCode::kValidation, "could not condition the gradcheck instance away from kinks");
}

double gradcheck_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

double central_difference_error(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                                std::span<const double> analytic, double h) {
  if (analytic.size() != x.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient and parameter vectors differ in length");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    worst = std::max(worst, gradcheck_relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

GradcheckReport finite_diff_gradcheck(const GradcheckInstance& inst, double h) {
  require_gradcheck_size(inst.problem.width(), inst.problem.height());
  const Problem& problem = inst.problem;
  const OptConfig& cfg = inst.cfg;
  const Gradients analytic = gradients(inst.state, problem, cfg);
  OptState probe = inst.state;
  GradcheckReport report;

  auto central = [&](double& param) {
    const double saved = param;
    param = saved + h;
    const double up = total_loss(probe, problem, cfg).total;
    param = saved - h;
    const double down = total_loss(probe, problem, cfg).total;
    param = saved;
    return (up - down) / (2.0 * h);
  };
  auto record = [&](double a, double f, double& group_max, const std::string& name) {
    const double rel = gradcheck_relative_error(a, f);
    group_max = std::max(group_max, rel);
    if (report.worst.empty() || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      std::ostringstream s;
      s << name << " analytic=" << a << " numeric=" << f;
      report.worst = s.str();
    }
    ++report.parameters;
  };

  for (std::size_t i = 0; i < probe.depth.size(); ++i) {
    if (problem.inputs.valid[i] == 0) continue;
    record(analytic.depth[i], central(probe.depth[i]), report.max_rel_depth, "depth[" + std::to_string(i) + "]");
    for (int c = 0; c < 3; ++c) {
      record(analytic.normals[i][c], central(probe.normals[i][c]), report.max_rel_normals,
             "normal[" + std::to_string(i) + "][" + std::to_string(c) + "]");
    }
  }
  for (int c = 0; c < kNumFaces; ++c) {
    record(analytic.lambda[c], central(probe.lambda[c]), report.max_rel_lambda, "lambda[" + std::to_string(c) + "]");
  }
  return report;
}

}  // namespace panoalign
