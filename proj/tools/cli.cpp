#include "cli.hpp"

#include <charconv>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "panoalign/error.hpp"
#include "panoalign/metrics.hpp"
#include "panoalign/oracle.hpp"
#include "panoalign/parallel.hpp"
#include "panoalign/resample.hpp"
#include "panoalign/rng.hpp"

namespace panoalign::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

[[noreturn]] void bad_flag(const std::string& msg) { throw Error(ErrorCode::kValidation, msg); }

std::pair<int, int> parse_size(const std::string& text, const char* flag) {
  const auto x = text.find('x');
  int w = 0, h = 0;
  if (x == std::string::npos ||
      std::from_chars(text.data(), text.data() + x, w).ec != std::errc{} ||
      std::from_chars(text.data() + x + 1, text.data() + text.size(), h).ec != std::errc{} || w <= 0 || h <= 0) {
    bad_flag(std::string(flag) + " expects WxH with positive integers, got '" + text + "'");
  }
  return {w, h};
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      bad_flag(std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  return out;
}

Vec3 parse_vec3(const std::string& text, const char* flag) {
  const auto v = parse_list(text, flag);
  if (v.size() != 3) bad_flag(std::string(flag) + " expects three comma-separated numbers");
  return {v[0], v[1], v[2]};
}

json loss_json(const LossBreakdown& l) {
  return {{"planar", l.planar}, {"depth", l.depth}, {"normal", l.normal}, {"total", l.total}};
}

json lambda_json(const std::array<double, kNumFaces>& lambda) {
  json j;
  for (int c = 0; c < kNumFaces; ++c) j[std::string(kFaceNames[static_cast<std::size_t>(c)])] = lambda[static_cast<std::size_t>(c)];
  return j;
}

json schedule_json(const OptConfig& cfg, int width, int height) {
  json arr = json::array();
  for (const LevelPlan& p : plan_levels(cfg, width, height)) {
    arr.push_back({{"level", p.level}, {"width", p.width}, {"height", p.height},
                   {"iterations", p.iterations}, {"lr", p.lr}});
  }
  return arr;
}

struct Context {
  std::string command_line;
  int threads = 0;
};

json provenance(const Context& ctx, const std::string& subcommand) {
  return {{"tool", "panoalign"},
          {"version", PANOALIGN_VERSION},
          {"subcommand", subcommand},
          {"command_line", ctx.command_line},
          {"rng", std::string(CounterRng::kName)},
          {"threads", thread_count()}};
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir / "manifest.json") && !force) {
    bad_flag(dir.string() + " already holds a manifest; pass --force to overwrite");
  }
  fs::create_directories(dir / "faces");
}

std::string face_file(int c, const char* suffix) {
  return "faces/" + std::string(kFaceNames[static_cast<std::size_t>(c)]) + suffix;
}

// ---------------------------------------------------------------------------

struct SplitArgs {
  std::string erp, out, image, normals;
  int face_size = 0;
  bool force = false;
};

int cmd_split(const SplitArgs& a, const Context& ctx) {
  const ScalarGrid erp = io::read_depth(a.erp);
  require_erp_shape(erp, "split input");
  const int n = a.face_size > 0 ? a.face_size : default_face_size(erp.height());
  const CameraModel cam = CameraModel::cubemap(n);
  prepare_out_dir(a.out, a.force);

  // Faces store perspective z-depth; the panorama holds radial distance.
  DepthFaces depth = erp_to_faces(erp, cam, Interp::kNearest);
  for (auto& face : depth.faces) {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) face(x, y) /= rho_factor({x + 0.5, y + 0.5}, cam);
  }

  io::Manifest m;
  m.erp_width = erp.width();
  m.erp_height = erp.height();
  m.face_size = n;
  m.base_dir = a.out;
  for (int c = 0; c < kNumFaces; ++c) {
    auto& f = m.faces[static_cast<std::size_t>(c)];
    f.name = kFaceNames[static_cast<std::size_t>(c)];
    f.depth = fs::path(a.out) / face_file(c, "_depth.pfm");
    io::write_depth(f.depth, io::flip_rows(depth.faces[static_cast<std::size_t>(c)]));
  }

  if (!a.normals.empty()) {
    const io::NormalRead nr = io::read_normals(a.normals);
    if (!nr.normals.same_shape(erp)) {
      throw Error(ErrorCode::kDimensionMismatch, "normals and depth panoramas differ in size");
    }
    NormalFaces normals = erp_to_faces(nr.normals, cam, Interp::kNearest);
    for (int c = 0; c < kNumFaces; ++c) {
      auto& face = normals.faces[static_cast<std::size_t>(c)];
      const Mat3 to_face = cam.rotation(c).transpose();
      for (std::size_t i = 0; i < face.size(); ++i) face[i] = to_face * face[i];
      auto& f = m.faces[static_cast<std::size_t>(c)];
      f.normals = fs::path(a.out) / face_file(c, "_normals.pfm");
      io::write_normals(f.normals, io::flip_rows(face));
    }
  }

  if (!a.image.empty()) {
    const io::Image8 img = io::read_png8(a.image);
    if (img.width != erp.width() || img.height != erp.height()) {
      throw Error(ErrorCode::kDimensionMismatch, "image and depth panoramas differ in size");
    }
    std::vector<DepthFaces> planes;
    for (int ch = 0; ch < img.channels; ++ch) {
      ScalarGrid g(img.width, img.height);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = img.data[i * img.channels + ch];
      planes.push_back(erp_to_faces(g, cam, Interp::kBilinear));
    }
    for (int c = 0; c < kNumFaces; ++c) {
      io::Image8 face{n, n, img.channels, std::vector<std::uint8_t>(static_cast<std::size_t>(n * n * img.channels))};
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          for (int ch = 0; ch < img.channels; ++ch) {
            const double v = planes[static_cast<std::size_t>(ch)].faces[static_cast<std::size_t>(c)](x, n - 1 - y);
            face.data[static_cast<std::size_t>((y * n + x) * img.channels + ch)] =
                static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
          }
      auto& f = m.faces[static_cast<std::size_t>(c)];
      f.image = fs::path(a.out) / face_file(c, "_image.png");
      io::write_png8(f.image, face);
    }
    m.intensity = fs::absolute(a.image);
  }

  io::write_manifest(fs::path(a.out) / "manifest.json", m);
  json prov = provenance(ctx, "split");
  prov["erp_digest"] = io::file_digest(a.erp);
  write_json(fs::path(a.out) / "provenance.json", prov);
  std::cout << "split " << erp.width() << "x" << erp.height() << " into six " << n << "x" << n
            << " faces in " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MergeArgs {
  std::string manifest, out, normals_out;
};

int cmd_merge(const MergeArgs& a, const Context& ctx) {
  const io::Manifest m = io::load_manifest(a.manifest);
  if (!a.normals_out.empty() && !m.has_normals()) {
    bad_flag("--normals-out needs normal files in the manifest");
  }
  std::vector<std::string> warnings;
  const OptInputs in = load_inputs(m, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  io::write_depth(a.out, in.depth);
  if (!a.normals_out.empty()) io::write_normals(a.normals_out, in.normals);
  fs::path sidecar = a.out;
  sidecar.replace_extension(".faceid.png");
  io::Image8 ids{in.face_id.width(), in.face_id.height(), 1,
                 std::vector<std::uint8_t>(in.face_id.values().begin(), in.face_id.values().end())};
  io::write_png8(sidecar, ids);

  json prov = provenance(ctx, "merge");
  prov["manifest_digest"] = io::file_digest(a.manifest);
  prov["face_id_map"] = sidecar.filename().string();
  write_json(fs::path(a.out).string() + ".json", prov);
  std::cout << "merged " << in.depth.width() << "x" << in.depth.height() << " depth into " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AlignArgs {
  std::string manifest, config, out, ply, report;
};

int cmd_align(const AlignArgs& a, const Context& ctx) {
  const io::Manifest m = io::load_manifest(a.manifest);
  // Edge weights come from image texture. With a constant image, edges across
  // surface boundaries keep full weight and the planar term is minimized by
  // shrinking every free face scale, so the run would be meaningless.
  if (m.intensity.empty()) {
    throw Error(ErrorCode::kValidation, "manifest has no intensity image; align needs one for edge weights "
                                        "(split --image)");
  }
  io::ConfigDocument doc;
  if (!a.config.empty()) doc = io::load_config(a.config);
  std::vector<std::string> warnings = doc.warnings;
  const OptInputs in = load_inputs(m, &warnings);
  const int coarse_w = in.depth.width() >> (doc.opt.levels - 1);
  if (coarse_w < 32) {
    // Faces only a few pixels wide at the coarsest level leave the face
    // scales poorly anchored; they tend to shrink toward min_lambda.
    warnings.push_back("coarsest pyramid level is " + std::to_string(coarse_w) + "x" + std::to_string(coarse_w / 2) +
                       "; face scales are unreliable below 32x16");
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  OptHooks hooks;
  hooks.fail_on_divergence = false;
  json report;
  report["provenance"] = provenance(ctx, "align");
  report["manifest"] = {{"path", a.manifest}, {"digest", io::file_digest(a.manifest)}};
  report["config"] = {{"path", a.config.empty() ? json(nullptr) : json(a.config)},
                      {"digest", a.config.empty() ? json(nullptr) : json(io::file_digest(a.config))},
                      {"resolved", json::parse(io::config_to_json(doc.opt))}};
  report["schedule"] = schedule_json(doc.opt, in.depth.width(), in.depth.height());
  report["warnings"] = warnings;

  OptResult result;
  try {
    result = optimize(in, doc.opt, hooks);
  } catch (const Error& e) {
    report["status"] = std::string(to_string(e.code()));
    report["diagnostic"] = e.detail();
    if (!a.report.empty()) write_json(a.report, report);
    throw;
  }

  json levels = json::array();
  std::string diverged;
  for (const LevelReport& l : result.levels) {
    levels.push_back({{"level", l.level}, {"width", l.width}, {"height", l.height},
                      {"iterations", l.iterations}, {"lr", l.lr},
                      {"initial", loss_json(l.initial)}, {"final", loss_json(l.final)},
                      {"lambda", lambda_json(l.lambda)}, {"seconds", l.seconds}});
    std::cout << "level " << l.level << " " << l.width << "x" << l.height << "  " << l.iterations
              << " it  lr " << l.lr << "  loss " << l.initial.total << " -> " << l.final.total << "  ("
              << std::fixed << std::setprecision(2) << l.seconds << " s)\n"
              << std::defaultfloat << std::setprecision(6);
    if (diverged.empty() && l.final.total > l.initial.total) {
      std::ostringstream msg;
      msg << "level " << l.level << " ended at loss " << l.final.total << " above its initial " << l.initial.total;
      diverged = msg.str();
    }
  }
  report["levels"] = levels;
  report["lambda"] = lambda_json(result.state.lambda);
  report["status"] = diverged.empty() ? "ok" : "Diverged";
  if (!diverged.empty()) report["diagnostic"] = diverged;
  if (!a.report.empty()) write_json(a.report, report);
  if (!diverged.empty()) throw Error(ErrorCode::kDiverged, diverged);

  std::cout << "lambda";
  for (double l : result.state.lambda) std::cout << " " << l;
  std::cout << "\n";

  io::write_depth(a.out, result.state.depth);
  if (!a.ply.empty()) {
    PointCloud cloud = lift_points(result.state.depth, &in.valid);
    for (std::size_t i = 0; i < in.valid.size(); ++i) {
      if (!in.valid[i]) continue;
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(in.intensity[i], 0.0, 1.0)));
      cloud.colors.push_back({g, g, g});
    }
    io::write_pointcloud(a.ply, cloud);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred, gt, metrics = "2d,3d", config, out;
  std::optional<double> tau, voxel;
  std::optional<std::size_t> max_points;
  std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalArgs& a, const Context& ctx) {
  bool with_2d = false, with_3d = false;
  std::stringstream ss(a.metrics);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "2d") with_2d = true;
    else if (item == "3d") with_3d = true;
    else bad_flag("--metrics accepts 2d and 3d, got '" + item + "'");
  }
  EvalConfig cfg;
  if (!a.config.empty()) cfg = io::load_config(a.config).eval;
  if (a.tau) cfg.fscore_tau = *a.tau;
  if (a.voxel) cfg.voxel_size = *a.voxel;
  if (a.max_points) cfg.max_points = *a.max_points;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  const ScalarGrid pred = io::read_depth(a.pred);
  const ScalarGrid gt = io::read_depth(a.gt);
  if (!pred.same_shape(gt)) {
    throw Error(ErrorCode::kDimensionMismatch, "prediction is " + std::to_string(pred.width()) + "x" +
                                                   std::to_string(pred.height()) + " but ground truth is " +
                                                   std::to_string(gt.width()) + "x" + std::to_string(gt.height()));
  }
  const MetricReport r = evaluate(pred, gt, cfg, with_2d, with_3d);

  json j;
  j["provenance"] = provenance(ctx, "eval");
  j["pred_digest"] = io::file_digest(a.pred);
  j["gt_digest"] = io::file_digest(a.gt);
  j["config"] = json::parse(io::eval_config_to_json(cfg));
  j["aligned_scale"] = r.aligned_scale;
  j["valid_pixels"] = r.valid_pixel_count;
  if (r.has_2d) {
    j["abs_rel"] = r.abs_rel;
    j["rmse"] = r.rmse;
    j["delta1"] = r.delta1;
    j["delta2"] = r.delta2;
    j["delta3"] = r.delta3;
  }
  if (r.has_3d) {
    j["chamfer"] = r.chamfer;
    j["fscore"] = r.fscore;
    j["iou"] = r.iou;
  }
  std::cout << j.dump(2) << "\n";
  if (!a.out.empty()) write_json(a.out, j);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string scene = "box", size = "256x128", scales = "1,1,1,1,1,1", out;
  std::string camera = "0,0,0", half_extents = "3,1.5,4";
  double radius = 3.0;
  double normal_noise = 0.0, depth_noise = 0.0;
  int face_size = 0;
  std::uint64_t seed = 0;
  bool force = false;
};

int cmd_synth(const SynthArgs& a, const Context& ctx) {
  SceneSpec scene;
  if (a.scene == "box") scene.kind = SceneKind::kBox;
  else if (a.scene == "sphere") scene.kind = SceneKind::kSphere;
  else bad_flag("--scene must be box or sphere");
  const auto [w, h] = parse_size(a.size, "--size");
  if (w != 2 * h) bad_flag("--size must have width = 2 * height");
  scene.erp_width = w;
  scene.camera = parse_vec3(a.camera, "--camera");
  scene.half_extents = parse_vec3(a.half_extents, "--half-extents");
  scene.radius = a.radius;
  scene.validate();

  Corruption c;
  const auto s = parse_list(a.scales, "--scales");
  if (s.size() != kNumFaces) bad_flag("--scales needs six values");
  std::copy(s.begin(), s.end(), c.scales.begin());
  c.normal_noise_deg = a.normal_noise;
  c.depth_noise = a.depth_noise;
  c.validate();

  const int n = a.face_size > 0 ? a.face_size : default_face_size(h);
  const CameraModel cam = CameraModel::cubemap(n);
  prepare_out_dir(a.out, a.force);
  const fs::path dir = a.out;

  const CorruptedFaces faces = corrupt(scene, cam, c, a.seed);
  const SceneRender gt = render_scene(scene);

  io::Manifest m;
  m.erp_width = w;
  m.erp_height = h;
  m.face_size = n;
  m.base_dir = dir;
  m.intensity = dir / "intensity.pfm";
  m.gt_depth = dir / "gt_depth.pfm";
  for (int c2 = 0; c2 < kNumFaces; ++c2) {
    auto& f = m.faces[static_cast<std::size_t>(c2)];
    f.name = kFaceNames[static_cast<std::size_t>(c2)];
    f.depth = dir / face_file(c2, "_depth.pfm");
    f.normals = dir / face_file(c2, "_normals.pfm");
    io::write_depth(f.depth, io::flip_rows(faces.depth.faces[static_cast<std::size_t>(c2)]));
    io::write_normals(f.normals, io::flip_rows(faces.normals.faces[static_cast<std::size_t>(c2)]));
  }
  io::write_depth(m.intensity, gt.intensity);
  io::write_depth(m.gt_depth, gt.depth);
  io::write_normals(dir / "gt_normals.pfm", gt.normals);
  io::write_manifest(dir / "manifest.json", m);

  json prov = provenance(ctx, "synth");
  prov["seed"] = a.seed;
  prov["scene"] = {{"kind", a.scene},
                   {"half_extents", {scene.half_extents.x(), scene.half_extents.y(), scene.half_extents.z()}},
                   {"radius", scene.radius},
                   {"camera", {scene.camera.x(), scene.camera.y(), scene.camera.z()}},
                   {"erp_width", w}};
  prov["corruption"] = {{"scales", c.scales}, {"normal_noise_deg", c.normal_noise_deg}, {"depth_noise", c.depth_noise}};
  write_json(dir / "provenance.json", prov);
  std::cout << "synthesized " << a.scene << " scene " << w << "x" << h << " (faces " << n << "x" << n << ") in "
            << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::string size = "16x8";
  int count = 1;
  double step = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a, const Context&) {
  const auto [w, h] = parse_size(a.size, "--size");
  if (w > kMaxGradcheckWidth || h > kMaxGradcheckHeight) bad_flag("--size is capped at 32x16");
  if (a.count < 1) bad_flag("--count must be positive");
  const OptConfig cfg;
  double worst = 0.0;
  for (int k = 0; k < a.count; ++k) {
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(k);
    const GradcheckInstance inst = random_gradcheck_instance(seed, w, h, cfg, 8.0 * a.step);
    const GradcheckReport r = finite_diff_gradcheck(inst, a.step);
    std::cout << "seed " << seed << "  params " << r.parameters << "  max_rel_error " << std::scientific
              << std::setprecision(3) << r.max_rel_error << "  (D " << r.max_rel_depth << ", n " << r.max_rel_normals
              << ", lambda " << r.max_rel_lambda << ")  worst " << r.worst << "\n"
              << std::defaultfloat << std::setprecision(6);
    worst = std::max(worst, r.max_rel_error);
  }
  const bool ok = worst < 1e-4;
  std::cout << "max relative error " << std::scientific << worst << std::defaultfloat << (ok ? "  PASS" : "  FAIL")
            << "\n";
  return ok ? kExitOk : kExitNumeric;
}

int exit_code_for(ErrorCode code) { return is_numeric_failure(code) ? kExitNumeric : kExitValidation; }

int apply_threads(std::optional<int> flag) {
  int n = 0;
  if (flag) {
    n = *flag;
  } else if (const char* env = std::getenv("PANOALIGN_THREADS"); env != nullptr && *env != '\0') {
    const std::string_view s(env);
    if (std::from_chars(s.data(), s.data() + s.size(), n).ec != std::errc{}) {
      bad_flag("PANOALIGN_THREADS must be an integer, got '" + std::string(s) + "'");
    }
  }
  if (n < 0) bad_flag("thread count must be non-negative");
  set_thread_count(n);
  return n;
}

}  // namespace

OptInputs load_inputs(const io::Manifest& m, std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& w) {
    if (warnings != nullptr) warnings->push_back(w);
  };
  const DepthFaces faces = io::load_depth_faces(m);
  MergedDepth merged = merge_depth_to_erp(faces, m.erp_width);

  OptInputs in;
  if (m.has_normals()) {
    const NormalFaces nf = io::load_normal_faces(m);
    const bool flip = !m.normals_toward_camera;
    MergedNormals mn = m.normal_frame == io::NormalFrame::kFace ? merge_normals_to_erp(nf, merged.face_id, flip)
                                                                : merge_world_normals_to_erp(nf, merged.face_id, flip);
    in.normals = std::move(mn.normals);
    for (std::size_t i = 0; i < merged.valid.size(); ++i) merged.valid[i] &= mn.valid[i];
  } else {
    warn("manifest has no normals; using normals of the merged depth");
    NormalField nf = normals_from_depth(merged.depth);
    in.normals = std::move(nf.normals);
    for (std::size_t i = 0; i < merged.valid.size(); ++i) merged.valid[i] &= nf.valid[i];
  }

  if (!m.intensity.empty()) {
    in.intensity = io::read_intensity(m.intensity);
    if (!in.intensity.same_shape(merged.depth)) {
      throw Error(ErrorCode::kDimensionMismatch, "intensity image does not match the ERP size");
    }
  } else {
    in.intensity = ScalarGrid(merged.depth.width(), merged.depth.height(), 0.5);
  }
  in.depth = std::move(merged.depth);
  in.face_id = std::move(merged.face_id);
  in.valid = std::move(merged.valid);
  return in;
}

int run(int argc, const char* const* argv) {
  Context ctx;
  for (int i = 0; i < argc; ++i) ctx.command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Scale-consistent panoramic depth from per-face cubemap predictions", "panoalign"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (0: all cores; env PANOALIGN_THREADS)");
  app.set_version_flag("--version", PANOALIGN_VERSION);

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Cut an ERP depth map into six cube faces and a manifest");
  sp->add_option("--erp", split.erp, "ERP depth (.pfm or 16-bit .png)")->required();
  sp->add_option("--out", split.out, "Output directory")->required();
  sp->add_option("--face-size", split.face_size, "Face resolution (default: ERP height / 2)");
  sp->add_option("--image", split.image, "ERP color image, split into face images and used as intensity");
  sp->add_option("--normals", split.normals, "ERP world-frame normals (.pfm)");
  sp->add_flag("--force", split.force, "Overwrite an existing manifest");

  MergeArgs merge;
  auto* mg = app.add_subcommand("merge", "Merge six faces into ERP depth and normals");
  mg->add_option("--manifest", merge.manifest)->required();
  mg->add_option("--out", merge.out, "ERP depth output")->required();
  mg->add_option("--normals-out", merge.normals_out, "ERP normal output (.pfm)");

  AlignArgs align;
  auto* al = app.add_subcommand("align", "Merge, then jointly refine depth, normals and per-face scales");
  al->add_option("--manifest", align.manifest)->required();
  al->add_option("--config", align.config, "JSON config (defaults when absent)");
  al->add_option("--out", align.out, "Aligned ERP depth output")->required();
  al->add_option("--ply", align.ply, "Point cloud output");
  al->add_option("--report", align.report, "JSON report output");

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "Median-aligned depth and point-cloud metrics");
  ev->add_option("--pred", eval.pred)->required();
  ev->add_option("--gt", eval.gt)->required();
  ev->add_option("--metrics", eval.metrics, "Comma list of 2d,3d");
  ev->add_option("--tau", eval.tau, "F-score threshold, meters");
  ev->add_option("--voxel", eval.voxel, "Voxel size, meters");
  ev->add_option("--max-points", eval.max_points);
  ev->add_option("--seed", eval.seed, "Subsampling seed");
  ev->add_option("--config", eval.config, "JSON config with an eval section");
  ev->add_option("--out", eval.out, "JSON report output");

  SynthArgs synth;
  auto* sy = app.add_subcommand("synth", "Render an analytic scene as corrupted cube faces");
  sy->add_option("--scene", synth.scene, "box or sphere");
  sy->add_option("--size", synth.size, "ERP size WxH");
  sy->add_option("--scales", synth.scales, "Six per-face depth scales");
  sy->add_option("--seed", synth.seed);
  sy->add_option("--out", synth.out)->required();
  sy->add_option("--camera", synth.camera, "Camera position x,y,z");
  sy->add_option("--half-extents", synth.half_extents, "Box half extents x,y,z");
  sy->add_option("--radius", synth.radius, "Sphere radius");
  sy->add_option("--normal-noise", synth.normal_noise, "Normal noise std-dev, degrees");
  sy->add_option("--depth-noise", synth.depth_noise, "Relative depth noise std-dev");
  sy->add_option("--face-size", synth.face_size, "Face resolution (default: height / 2)");
  sy->add_flag("--force", synth.force, "Overwrite an existing manifest");

  GradcheckArgs grad;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc->add_option("--seed", grad.seed);
  gc->add_option("--size", grad.size, "Grid size WxH, at most 32x16");
  gc->add_option("--count", grad.count, "Instances, seeds seed .. seed + count - 1");
  gc->add_option("--step", grad.step, "Finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    ctx.threads = apply_threads(threads);
    if (sp->parsed()) return cmd_split(split, ctx);
    if (mg->parsed()) return cmd_merge(merge, ctx);
    if (al->parsed()) return cmd_align(align, ctx);
    if (ev->parsed()) return cmd_eval(eval, ctx);
    if (sy->parsed()) return cmd_synth(synth, ctx);
    if (gc->parsed()) return cmd_gradcheck(grad, ctx);
  } catch (const Error& e) {
    std::cerr << "panoalign: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "panoalign: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitValidation;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace panoalign::cli
