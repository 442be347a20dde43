#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "panoalign/geometry.hpp"
#include "panoalign/graphopt.hpp"
#include "panoalign/grid.hpp"
#include "panoalign/metrics.hpp"
#include "panoalign/oracle.hpp"

namespace panoalign::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Raster formats

/// Decoded PFM: rows top-down, channel-interleaved float32.
struct PfmImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 ("Pf") or 3 ("PF")
  std::vector<float> data;
};

PfmImage read_pfm(const fs::path& path);
/// Always writes little-endian (negative scale field).
void write_pfm(const fs::path& path, const PfmImage& img);

/// 8-bit gray or RGB PNG, rows top-down.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
};

Image8 read_png8(const fs::path& path);
void write_png8(const fs::path& path, const Image8& img);

/// Linear 16-bit quantization: value = offset + scale * code.
struct Quantization {
  double scale = 1.0;
  double offset = 0.0;
};

/// Sidecar holding the quantization of a 16-bit PNG depth map.
fs::path png16_sidecar(const fs::path& png);

/// Depth maps: .pfm (lossless float32) or .png (16-bit + JSON sidecar).
/// Non-finite values are written as 0 in PNG16.
ScalarGrid read_depth(const fs::path& path);
void write_depth(const fs::path& path, const ScalarGrid& depth);

struct NormalRead {
  VectorGrid normals;  // renormalized where valid
  MaskGrid valid;      // 0 for zero-length or non-finite vectors
  double max_deviation = 0.0;  // max | |n| - 1 | over valid pixels
  bool non_unit = false;       // max_deviation > 1e-3
};

/// 3-channel PFM, channels (x, y, z).
NormalRead read_normals(const fs::path& path);
void write_normals(const fs::path& path, const VectorGrid& normals);

/// Grayscale intensity in [0, 1] from a 1-channel PFM or an 8-bit PNG
/// (RGB is converted with Rec. 601 luma weights).
ScalarGrid read_intensity(const fs::path& path);

/// Flips rows in place (face files may be stored top-down).
template <typename T>
Grid<T> flip_rows(const Grid<T>& g) {
  Grid<T> out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) out(x, g.height() - 1 - y) = g(x, y);
  return out;
}

// ---------------------------------------------------------------------------
// Point clouds

/// Binary little-endian PLY with float32 x, y, z and optional uchar RGB.
void write_pointcloud(const fs::path& path, const PointCloud& cloud);
PointCloud read_pointcloud(const fs::path& path);

// ---------------------------------------------------------------------------
// Documents

struct ConfigDocument {
  OptConfig opt;
  EvalConfig eval;
  std::optional<SceneSpec> scene;
  std::vector<std::string> warnings;  // unknown keys in lenient mode
};

/// Parses a JSON config. Unknown keys are errors in strict mode (with a
/// closest-key suggestion) and warnings otherwise. Missing keys keep defaults.
ConfigDocument parse_config(const std::string& text, bool strict = true);
ConfigDocument load_config(const fs::path& path, bool strict = true);

/// Fully resolved config as JSON text.
std::string config_to_json(const OptConfig& cfg);
std::string eval_config_to_json(const EvalConfig& cfg);

inline constexpr const char* kManifestVersion = "panoalign-manifest/1";

enum class NormalFrame { kFace, kWorld };
enum class RowOrder { kTopDown, kBottomUp };

struct ManifestFace {
  std::string name;
  fs::path depth;    // resolved against the manifest directory
  fs::path normals;  // may be empty
  fs::path image;    // optional rendered face image
};

/// Binds six face files to the camera model. Face depth is perspective
/// z-depth; face rows are stored top-down unless stated otherwise.
struct Manifest {
  std::string version = kManifestVersion;
  int erp_width = 0;
  int erp_height = 0;
  int face_size = 0;
  std::array<ManifestFace, kNumFaces> faces;  // fixed face order
  std::string depth_unit = "meters";
  std::string depth_encoding = "pfm";
  NormalFrame normal_frame = NormalFrame::kFace;
  bool normals_toward_camera = true;
  RowOrder face_rows = RowOrder::kTopDown;
  fs::path intensity;  // optional
  fs::path gt_depth;   // optional
  fs::path base_dir;

  /// Throws ValidationError naming the offending field.
  void validate(bool require_files) const;
  bool has_normals() const;
};

Manifest parse_manifest(const std::string& text, const fs::path& base_dir, bool require_files = true);
Manifest load_manifest(const fs::path& path, bool require_files = true);
/// Writes paths relative to the manifest directory when possible.
void write_manifest(const fs::path& path, const Manifest& m);

/// Face depth / normals as described by the manifest, rows in camera order.
DepthFaces load_depth_faces(const Manifest& m);
NormalFaces load_normal_faces(const Manifest& m);

/// FNV-1a 64-bit digest of a file's bytes as "fnv1a64:<16 hex digits>".
std::string file_digest(const fs::path& path);
std::string text_digest(const std::string& text);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace panoalign::io
