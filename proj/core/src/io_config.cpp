#include <algorithm>
#include <set>

#include "json.hpp"
#include "panoalign/io.hpp"

namespace panoalign::io {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string closest(const std::string& key, const std::vector<std::string>& known) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& k : known) {
    const std::size_t d = edit_distance(key, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, what + " line " + std::to_string(line_of(text, e.byte)) + ": malformed JSON (" +
                                       e.what() + ")");
  }
}

// Reports keys of `obj` outside `known`; throws in strict mode.
void check_keys(const json& obj, const std::vector<std::string>& known, const std::string& section, bool strict,
                std::vector<std::string>& warnings) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) != known.end()) continue;
    std::string msg = section + "unknown key '" + key + "'";
    const std::string hint = closest(key, known);
    if (!hint.empty()) msg += " (did you mean '" + hint + "'?)";
    if (strict) throw Error(ErrorCode::kValidation, msg);
    warnings.push_back(msg);
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& section) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kValidation, section + "field '" + key + "' has the wrong type");
  }
}

void read_vec3(const json& obj, const char* key, Vec3& out, const std::string& section) {
  std::vector<double> v;
  read_field(obj, key, v, section);
  if (obj.contains(key)) {
    if (v.size() != 3) throw Error(ErrorCode::kValidation, section + "field '" + key + "' must have 3 entries");
    out = Vec3(v[0], v[1], v[2]);
  }
}

json require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw Error(ErrorCode::kValidation, what + " must be a JSON object");
  return j;
}

const std::vector<std::string> kOptKeys = {
    "alpha",      "sigma_int",      "sigma_spa",   "eta_p",          "eta_d",      "eta_n",
    "levels",     "iterations",     "lr_base",     "charbonnier_eps", "window_radius", "patch_size",
    "mask_threshold", "adam_beta1", "adam_beta2",  "adam_eps",       "min_depth",  "min_lambda",
    "reference_face", "step_scale", "lambda_step_scale", "normalize_depth", "scale_relative",
    "residual_handoff", "eval",       "scene"};
const std::vector<std::string> kEvalKeys = {"fscore_tau", "voxel_size", "max_points", "seed"};
const std::vector<std::string> kSceneKeys = {"kind", "half_extents", "radius", "camera", "erp_width"};

OptConfig read_opt(const json& j) {
  OptConfig c;
  const std::string s = "config ";
  read_field(j, "alpha", c.alpha, s);
  read_field(j, "sigma_int", c.sigma_int, s);
  read_field(j, "sigma_spa", c.sigma_spa, s);
  read_field(j, "eta_p", c.eta_p, s);
  read_field(j, "eta_d", c.eta_d, s);
  read_field(j, "eta_n", c.eta_n, s);
  read_field(j, "levels", c.levels, s);
  read_field(j, "iterations", c.iterations, s);
  read_field(j, "lr_base", c.lr_base, s);
  read_field(j, "charbonnier_eps", c.charbonnier_eps, s);
  read_field(j, "window_radius", c.window_radius, s);
  read_field(j, "patch_size", c.patch_size, s);
  read_field(j, "mask_threshold", c.mask_threshold, s);
  read_field(j, "adam_beta1", c.adam_beta1, s);
  read_field(j, "adam_beta2", c.adam_beta2, s);
  read_field(j, "adam_eps", c.adam_eps, s);
  read_field(j, "min_depth", c.min_depth, s);
  read_field(j, "min_lambda", c.min_lambda, s);
  read_field(j, "reference_face", c.reference_face, s);
  read_field(j, "step_scale", c.step_scale, s);
  read_field(j, "lambda_step_scale", c.lambda_step_scale, s);
  read_field(j, "normalize_depth", c.normalize_depth, s);
  read_field(j, "scale_relative", c.scale_relative, s);
  read_field(j, "residual_handoff", c.residual_handoff, s);
  return c;
}

ordered_json opt_json(const OptConfig& c) {
  ordered_json j;
  j["alpha"] = c.alpha;
  j["sigma_int"] = c.sigma_int;
  j["sigma_spa"] = c.sigma_spa;
  j["eta_p"] = c.eta_p;
  j["eta_d"] = c.eta_d;
  j["eta_n"] = c.eta_n;
  j["levels"] = c.levels;
  j["iterations"] = c.iterations;
  j["lr_base"] = c.lr_base;
  j["charbonnier_eps"] = c.charbonnier_eps;
  j["window_radius"] = c.window_radius;
  j["patch_size"] = c.patch_size;
  j["mask_threshold"] = c.mask_threshold;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["min_depth"] = c.min_depth;
  j["min_lambda"] = c.min_lambda;
  j["reference_face"] = c.reference_face;
  j["step_scale"] = c.step_scale;
  j["lambda_step_scale"] = c.lambda_step_scale;
  j["normalize_depth"] = c.normalize_depth;
  j["scale_relative"] = c.scale_relative;
  j["residual_handoff"] = c.residual_handoff;
  return j;
}

ordered_json eval_json(const EvalConfig& c) {
  ordered_json j;
  j["fscore_tau"] = c.fscore_tau;
  j["voxel_size"] = c.voxel_size;
  j["max_points"] = c.max_points;
  j["seed"] = c.seed;
  j["chamfer_convention"] = kChamferConvention;
  return j;
}

std::string path_string(const fs::path& p, const fs::path& base) {
  if (p.empty()) return {};
  std::error_code ec;
  const fs::path rel = fs::relative(p, base, ec);
  return (ec || rel.empty()) ? p.generic_string() : rel.generic_string();
}

fs::path resolve(const std::string& s, const fs::path& base) {
  if (s.empty()) return {};
  const fs::path p(s);
  return p.is_absolute() ? p : base / p;
}

int face_index(const std::string& name) {
  for (int c = 0; c < kNumFaces; ++c)
    if (kFaceNames[c] == name) return c;
  return -1;
}

}  // namespace

ConfigDocument parse_config(const std::string& text, bool strict) {
  ConfigDocument doc;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return doc;  // empty file: all defaults
  const json j = require_object(parse_json(text, "config"), "config");
  check_keys(j, kOptKeys, "config: ", strict, doc.warnings);
  doc.opt = read_opt(j);
  doc.opt.validate();

  if (j.contains("eval")) {
    const json e = require_object(j["eval"], "config section 'eval'");
    check_keys(e, kEvalKeys, "config eval: ", strict, doc.warnings);
    const std::string s = "eval ";
    read_field(e, "fscore_tau", doc.eval.fscore_tau, s);
    read_field(e, "voxel_size", doc.eval.voxel_size, s);
    read_field(e, "max_points", doc.eval.max_points, s);
    read_field(e, "seed", doc.eval.seed, s);
    doc.eval.validate();
  }
  if (j.contains("scene")) {
    const json sc = require_object(j["scene"], "config section 'scene'");
    check_keys(sc, kSceneKeys, "config scene: ", strict, doc.warnings);
    SceneSpec spec;
    const std::string s = "scene ";
    std::string kind = "box";
    read_field(sc, "kind", kind, s);
    if (kind == "box") {
      spec.kind = SceneKind::kBox;
    } else if (kind == "sphere") {
      spec.kind = SceneKind::kSphere;
    } else {
      throw Error(ErrorCode::kValidation, "scene field 'kind' must be \"box\" or \"sphere\"");
    }
    read_vec3(sc, "half_extents", spec.half_extents, s);
    read_field(sc, "radius", spec.radius, s);
    read_vec3(sc, "camera", spec.camera, s);
    read_field(sc, "erp_width", spec.erp_width, s);
    spec.validate();
    doc.scene = spec;
  }
  return doc;
}

ConfigDocument load_config(const fs::path& path, bool strict) {
  try {
    return parse_config(read_text(path), strict);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIoFailure) throw;
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

std::string config_to_json(const OptConfig& cfg) { return opt_json(cfg).dump(2); }
std::string eval_config_to_json(const EvalConfig& cfg) { return eval_json(cfg).dump(2); }

void Manifest::validate(bool require_files) const {
  if (version != kManifestVersion) {
    throw Error(ErrorCode::kValidation, "manifest field 'version': unrecognized \"" + version + "\" (expected \"" +
                                            kManifestVersion + "\")");
  }
  if (erp_width <= 0 || erp_height <= 0) throw Error(ErrorCode::kValidation, "manifest field 'erp' must be positive");
  if (erp_width != 2 * erp_height) {
    throw Error(ErrorCode::kValidation, "manifest field 'erp' must have width = 2 * height");
  }
  if (face_size <= 0) throw Error(ErrorCode::kValidation, "manifest field 'face_size' must be positive");
  if (depth_unit != "meters" && depth_unit != "millimeters") {
    throw Error(ErrorCode::kValidation, "manifest field 'depth_unit' must be \"meters\" or \"millimeters\"");
  }
  if (depth_encoding != "pfm" && depth_encoding != "png16") {
    throw Error(ErrorCode::kValidation, "manifest field 'depth_encoding' must be \"pfm\" or \"png16\"");
  }
  const bool any_normals = std::any_of(faces.begin(), faces.end(), [](const auto& f) { return !f.normals.empty(); });
  for (int c = 0; c < kNumFaces; ++c) {
    const ManifestFace& f = faces[c];
    const std::string field = "manifest field 'faces[" + std::to_string(c) + "]";
    if (f.name != kFaceNames[c]) {
      throw Error(ErrorCode::kValidation, field + ".name' must be \"" + std::string(kFaceNames[c]) + "\"");
    }
    if (f.depth.empty()) throw Error(ErrorCode::kValidation, field + ".depth' is missing");
    if (any_normals && f.normals.empty()) {
      throw Error(ErrorCode::kValidation, field + ".normals' is missing (normals must be given for all faces or none)");
    }
    if (!require_files) continue;
    for (const fs::path* p : {&f.depth, &f.normals, &f.image}) {
      if (!p->empty() && !fs::exists(*p)) {
        throw Error(ErrorCode::kValidation, field + "': file not found: " + p->string());
      }
    }
  }
  if (require_files) {
    if (!intensity.empty() && !fs::exists(intensity)) {
      throw Error(ErrorCode::kValidation, "manifest field 'intensity': file not found: " + intensity.string());
    }
    if (!gt_depth.empty() && !fs::exists(gt_depth)) {
      throw Error(ErrorCode::kValidation, "manifest field 'gt_depth': file not found: " + gt_depth.string());
    }
  }
}

bool Manifest::has_normals() const {
  return std::all_of(faces.begin(), faces.end(), [](const auto& f) { return !f.normals.empty(); });
}

Manifest parse_manifest(const std::string& text, const fs::path& base_dir, bool require_files) {
  const json j = require_object(parse_json(text, "manifest"), "manifest");
  std::vector<std::string> ignored;
  check_keys(j,
             {"version", "erp", "face_size", "face_order", "faces", "depth_unit", "depth_encoding", "normal_frame",
              "normals_toward_camera", "face_rows", "intensity", "gt_depth", "camera"},
             "manifest: ", true, ignored);
  Manifest m;
  m.base_dir = base_dir;
  const std::string s = "manifest ";
  if (!j.contains("version")) throw Error(ErrorCode::kValidation, "manifest field 'version' is missing");
  read_field(j, "version", m.version, s);
  if (j.contains("erp")) {
    const json erp = require_object(j["erp"], "manifest field 'erp'");
    read_field(erp, "width", m.erp_width, s + "erp ");
    read_field(erp, "height", m.erp_height, s + "erp ");
  }
  read_field(j, "face_size", m.face_size, s);
  read_field(j, "depth_unit", m.depth_unit, s);
  read_field(j, "depth_encoding", m.depth_encoding, s);
  read_field(j, "normals_toward_camera", m.normals_toward_camera, s);

  std::string frame = "face";
  read_field(j, "normal_frame", frame, s);
  if (frame == "face") {
    m.normal_frame = NormalFrame::kFace;
  } else if (frame == "world") {
    m.normal_frame = NormalFrame::kWorld;
  } else {
    throw Error(ErrorCode::kValidation, "manifest field 'normal_frame' must be \"face\" or \"world\"");
  }
  std::string rows = "top_down";
  read_field(j, "face_rows", rows, s);
  if (rows == "top_down") {
    m.face_rows = RowOrder::kTopDown;
  } else if (rows == "bottom_up") {
    m.face_rows = RowOrder::kBottomUp;
  } else {
    throw Error(ErrorCode::kValidation, "manifest field 'face_rows' must be \"top_down\" or \"bottom_up\"");
  }

  if (j.contains("face_order")) {
    std::vector<std::string> order;
    read_field(j, "face_order", order, s);
    if (order.size() != static_cast<std::size_t>(kNumFaces) ||
        !std::equal(order.begin(), order.end(), kFaceNames.begin())) {
      throw Error(ErrorCode::kValidation,
                  "manifest field 'face_order' must be [front, right, back, left, up, down]");
    }
  }

  if (!j.contains("faces") || !j["faces"].is_array()) {
    throw Error(ErrorCode::kValidation, "manifest field 'faces' must list exactly six faces");
  }
  const json& faces = j["faces"];
  if (faces.size() != static_cast<std::size_t>(kNumFaces)) {
    throw Error(ErrorCode::kValidation, "manifest field 'faces' must list exactly six faces, got " +
                                            std::to_string(faces.size()));
  }
  std::set<std::string> seen;
  for (const json& f : faces) {
    require_object(f, "manifest face entry");
    check_keys(f, {"name", "depth", "normals", "image"}, "manifest face: ", true, ignored);
    std::string name;
    std::string depth;
    std::string normals;
    std::string image;
    read_field(f, "name", name, s + "face ");
    read_field(f, "depth", depth, s + "face ");
    read_field(f, "normals", normals, s + "face ");
    read_field(f, "image", image, s + "face ");
    if (!seen.insert(name).second) {
      throw Error(ErrorCode::kValidation, "manifest field 'faces': duplicate face name \"" + name + "\"");
    }
    const int c = face_index(name);
    if (c < 0) throw Error(ErrorCode::kValidation, "manifest field 'faces': unknown face name \"" + name + "\"");
    m.faces[c] = ManifestFace{name, resolve(depth, base_dir), resolve(normals, base_dir), resolve(image, base_dir)};
  }

  std::string intensity;
  std::string gt;
  read_field(j, "intensity", intensity, s);
  read_field(j, "gt_depth", gt, s);
  m.intensity = resolve(intensity, base_dir);
  m.gt_depth = resolve(gt, base_dir);
  m.validate(require_files);
  return m;
}

Manifest load_manifest(const fs::path& path, bool require_files) {
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  try {
    return parse_manifest(read_text(path), base, require_files);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIoFailure) throw;
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

void write_manifest(const fs::path& path, const Manifest& m) {
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  ordered_json j;
  j["version"] = m.version;
  j["erp"] = {{"width", m.erp_width}, {"height", m.erp_height}};
  j["face_size"] = m.face_size;
  j["face_order"] = std::vector<std::string>(kFaceNames.begin(), kFaceNames.end());
  ordered_json faces = ordered_json::array();
  for (const ManifestFace& f : m.faces) {
    ordered_json e;
    e["name"] = f.name;
    e["depth"] = path_string(f.depth, base);
    if (!f.normals.empty()) e["normals"] = path_string(f.normals, base);
    if (!f.image.empty()) e["image"] = path_string(f.image, base);
    faces.push_back(e);
  }
  j["faces"] = faces;
  j["depth_unit"] = m.depth_unit;
  j["depth_encoding"] = m.depth_encoding;
  j["normal_frame"] = m.normal_frame == NormalFrame::kFace ? "face" : "world";
  j["normals_toward_camera"] = m.normals_toward_camera;
  j["face_rows"] = m.face_rows == RowOrder::kTopDown ? "top_down" : "bottom_up";
  if (!m.intensity.empty()) j["intensity"] = path_string(m.intensity, base);
  if (!m.gt_depth.empty()) j["gt_depth"] = path_string(m.gt_depth, base);
  j["camera"] = {{"model", "pinhole"},
                 {"fx", m.face_size / 2.0},
                 {"fy", m.face_size / 2.0},
                 {"cx", m.face_size / 2.0},
                 {"cy", m.face_size / 2.0},
                 {"world_frame", "x right, y up, z forward"}};
  write_text(path, j.dump(2) + "\n");
}

DepthFaces load_depth_faces(const Manifest& m) {
  DepthFaces out(CameraModel::cubemap(m.face_size));
  const double unit = m.depth_unit == "millimeters" ? 1e-3 : 1.0;
  for (int c = 0; c < kNumFaces; ++c) {
    ScalarGrid g = read_depth(m.faces[c].depth);
    if (g.width() != m.face_size || g.height() != m.face_size) {
      throw Error(ErrorCode::kDimensionMismatch, m.faces[c].depth.string() + ": expected " +
                                                     std::to_string(m.face_size) + "x" +
                                                     std::to_string(m.face_size) + " face");
    }
    if (unit != 1.0)
      for (auto& v : g.values()) v *= unit;
    out.faces[c] = m.face_rows == RowOrder::kTopDown ? flip_rows(g) : std::move(g);
  }
  return out;
}

NormalFaces load_normal_faces(const Manifest& m) {
  if (!m.has_normals()) throw Error(ErrorCode::kValidation, "manifest lists no normal files");
  NormalFaces out(CameraModel::cubemap(m.face_size));
  for (int c = 0; c < kNumFaces; ++c) {
    NormalRead r = read_normals(m.faces[c].normals);
    if (r.normals.width() != m.face_size || r.normals.height() != m.face_size) {
      throw Error(ErrorCode::kDimensionMismatch, m.faces[c].normals.string() + ": expected " +
                                                     std::to_string(m.face_size) + "x" +
                                                     std::to_string(m.face_size) + " face");
    }
    // Invalid pixels are passed on as zero vectors; the merge flags them.
    for (std::size_t i = 0; i < r.normals.size(); ++i)
      if (r.valid[i] == 0) r.normals[i] = Vec3::Zero();
    out.faces[c] = m.face_rows == RowOrder::kTopDown ? flip_rows(r.normals) : std::move(r.normals);
  }
  return out;
}

}  // namespace panoalign::io
