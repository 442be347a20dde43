#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>

#include "json.hpp"

#include "panoalign/io.hpp"

namespace panoalign::io {
namespace {

using json = nlohmann::json;

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

[[noreturn]] void io_failure(const fs::path& path, const std::string& what) {
  throw Error(ErrorCode::kIoFailure, path.string() + ": " + what);
}

[[noreturn]] void corrupt_header(const fs::path& path, const std::string& what) {
  throw Error(ErrorCode::kCorruptHeader, path.string() + ": " + what);
}

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) io_failure(path, std::string("cannot open for ") + (mode[0] == 'r' ? "reading" : "writing"));
  return f;
}

// Raw PNG decode: 8- or 16-bit samples, gray or RGB (alpha dropped).
struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;  // rows top-down, interleaved
};

RawPng decode_png(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    corrupt_header(path, "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_failure(path, "libpng initialization failed");
  }
  RawPng out;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    corrupt_header(path, "malformed PNG data");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + row_bytes * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.samples[i] = out.bit_depth == 16
                         ? static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1])
                         : buffer[i];
  }
  return out;
}

void encode_png(const fs::path& path, int width, int height, int channels, int bit_depth,
                const std::vector<std::uint16_t>& samples) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    io_failure(path, "libpng initialization failed");
  }
  const std::size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * bytes_per_sample;
  std::vector<png_byte> buffer(row_bytes * static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bit_depth == 16) {
      buffer[2 * i] = static_cast<png_byte>(samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xFF);
    } else {
      buffer[i] = static_cast<png_byte>(samples[i]);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + row_bytes * static_cast<std::size_t>(y);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_failure(path, "PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ScalarGrid read_png16_depth(const fs::path& path) {
  const RawPng raw = decode_png(path);
  if (raw.bit_depth != 16 || raw.channels != 1) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": depth PNG must be 16-bit grayscale");
  }
  Quantization q;
  const fs::path side = png16_sidecar(path);
  if (fs::exists(side)) {
    try {
      const json doc = json::parse(read_text(side));
      q.scale = doc.at("scale").get<double>();
      q.offset = doc.at("offset").get<double>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptHeader, side.string() + ": " + e.what());
    }
  }
  ScalarGrid g(raw.width, raw.height);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = q.offset + q.scale * raw.samples[i];
  return g;
}

void write_png16_depth(const fs::path& path, const ScalarGrid& depth) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : depth.values()) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Quantization q;
  if (std::isfinite(lo)) {
    q.offset = lo;
    q.scale = hi > lo ? (hi - lo) / 65535.0 : 1.0;
  }
  std::vector<std::uint16_t> codes(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double v = depth[i];
    const double code = std::isfinite(v) ? std::round((v - q.offset) / q.scale) : 0.0;
    codes[i] = static_cast<std::uint16_t>(std::clamp(code, 0.0, 65535.0));
  }
  encode_png(path, depth.width(), depth.height(), 1, 16, codes);
  json side = {{"scale", q.scale}, {"offset", q.offset}, {"encoding", "value = offset + scale * code"}};
  write_text(png16_sidecar(path), side.dump(2) + "\n");
}

}  // namespace

PfmImage read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_failure(path, "cannot open for reading");
  std::string magic;
  in >> magic;
  PfmImage img;
  if (magic == "Pf") {
    img.channels = 1;
  } else if (magic == "PF") {
    img.channels = 3;
  } else {
    corrupt_header(path, "bad PFM magic '" + magic + "'");
  }
  double scale = 0.0;
  if (!(in >> img.width >> img.height >> scale) || img.width <= 0 || img.height <= 0 || scale == 0.0 ||
      !std::isfinite(scale)) {
    corrupt_header(path, "bad PFM dimensions or scale");
  }
  if (!std::isspace(in.get())) corrupt_header(path, "missing whitespace after PFM scale");
  const bool little = scale < 0.0;

  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  img.data.resize(row * static_cast<std::size_t>(img.height));
  std::vector<std::uint32_t> buf(row);
  // PFM stores rows bottom to top.
  for (int y = img.height - 1; y >= 0; --y) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(row * 4))) {
      throw Error(ErrorCode::kDimensionMismatch, path.string() + ": PFM payload shorter than header dimensions");
    }
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t v = buf[i];
      if (little != (std::endian::native == std::endian::little)) v = byteswap32(v);
      img.data[static_cast<std::size_t>(y) * row + i] = std::bit_cast<float>(v);
    }
  }
  return img;
}

void write_pfm(const fs::path& path, const PfmImage& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw Error(ErrorCode::kUnsupportedFormat, "PFM supports 1 or 3 channels");
  }
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  if (img.data.size() != row * static_cast<std::size_t>(img.height)) {
    throw Error(ErrorCode::kDimensionMismatch, "PFM data size does not match dimensions");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_failure(path, "cannot open for writing");
  out << (img.channels == 1 ? "Pf" : "PF") << '\n' << img.width << ' ' << img.height << '\n' << "-1.0" << '\n';
  std::vector<std::uint32_t> buf(row);
  for (int y = img.height - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t v = std::bit_cast<std::uint32_t>(img.data[static_cast<std::size_t>(y) * row + i]);
      if constexpr (std::endian::native != std::endian::little) v = byteswap32(v);
      buf[i] = v;
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(row * 4));
  }
  if (!out) io_failure(path, "write failed");
}

Image8 read_png8(const fs::path& path) {
  const RawPng raw = decode_png(path);
  if (raw.bit_depth != 8) throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": expected an 8-bit PNG");
  Image8 img{raw.width, raw.height, raw.channels, {}};
  img.data.reserve(raw.samples.size());
  for (auto s : raw.samples) img.data.push_back(static_cast<std::uint8_t>(s));
  return img;
}

void write_png8(const fs::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw Error(ErrorCode::kUnsupportedFormat, "PNG8 supports 1 or 3 channels");
  std::vector<std::uint16_t> samples(img.data.begin(), img.data.end());
  encode_png(path, img.width, img.height, img.channels, 8, samples);
}

fs::path png16_sidecar(const fs::path& png) {
  fs::path side = png;
  side += ".json";
  return side;
}

ScalarGrid read_depth(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".pfm") {
    const PfmImage img = read_pfm(path);
    if (img.channels != 1) throw Error(ErrorCode::kDimensionMismatch, path.string() + ": depth PFM must have 1 channel");
    ScalarGrid g(img.width, img.height);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = img.data[i];
    return g;
  }
  if (ext == ".png") return read_png16_depth(path);
  throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": depth must be .pfm or .png");
}

void write_depth(const fs::path& path, const ScalarGrid& depth) {
  const std::string ext = lower_ext(path);
  if (ext == ".pfm") {
    PfmImage img{depth.width(), depth.height(), 1, std::vector<float>(depth.size())};
    for (std::size_t i = 0; i < depth.size(); ++i) img.data[i] = static_cast<float>(depth[i]);
    write_pfm(path, img);
    return;
  }
  if (ext == ".png") {
    write_png16_depth(path, depth);
    return;
  }
  throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": depth must be .pfm or .png");
}

NormalRead read_normals(const fs::path& path) {
  if (lower_ext(path) != ".pfm") throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": normals must be .pfm");
  const PfmImage img = read_pfm(path);
  if (img.channels != 3) throw Error(ErrorCode::kDimensionMismatch, path.string() + ": normal PFM must have 3 channels");
  NormalRead out{VectorGrid(img.width, img.height), MaskGrid(img.width, img.height, 1), 0.0, false};
  for (std::size_t i = 0; i < out.normals.size(); ++i) {
    const Vec3 v(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
    const double len = v.norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
      out.normals[i] = Vec3::Zero();
      out.valid[i] = 0;
      continue;
    }
    out.max_deviation = std::max(out.max_deviation, std::abs(len - 1.0));
    out.normals[i] = v / len;
  }
  out.non_unit = out.max_deviation > 1e-3;
  return out;
}

void write_normals(const fs::path& path, const VectorGrid& normals) {
  PfmImage img{normals.width(), normals.height(), 3, std::vector<float>(normals.size() * 3)};
  for (std::size_t i = 0; i < normals.size(); ++i)
    for (int c = 0; c < 3; ++c) img.data[3 * i + static_cast<std::size_t>(c)] = static_cast<float>(normals[i][c]);
  write_pfm(path, img);
}

ScalarGrid read_intensity(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".pfm") {
    const PfmImage img = read_pfm(path);
    ScalarGrid g(img.width, img.height);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (img.channels == 1) {
        g[i] = img.data[i];
      } else {
        g[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
      }
      g[i] = std::clamp(g[i], 0.0, 1.0);
    }
    return g;
  }
  if (ext == ".png") {
    const Image8 img = read_png8(path);
    ScalarGrid g(img.width, img.height);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (img.channels == 1) {
        g[i] = img.data[i] / 255.0;
      } else {
        g[i] = (0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2]) / 255.0;
      }
    }
    return g;
  }
  throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": intensity must be .pfm or .png");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_failure(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_failure(path, "cannot open for writing");
  out << text;
  if (!out) io_failure(path, "write failed");
}

std::string text_digest(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream ss;
  ss << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

std::string file_digest(const fs::path& path) { return text_digest(read_text(path)); }

}  // namespace panoalign::io
