#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "panoalign/io.hpp"

namespace panoalign::io {
namespace {

void put_le32(char* dst, float f) {
  std::uint32_t v = std::bit_cast<std::uint32_t>(f);
  for (int b = 0; b < 4; ++b) dst[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
}

float get_le32(const char* src) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(src[b])) << (8 * b);
  return std::bit_cast<float>(v);
}

}  // namespace

void write_pointcloud(const fs::path& path, const PointCloud& cloud) {
  if (cloud.empty()) throw Error(ErrorCode::kEmptyCloud, "refusing to write an empty point cloud");
  const bool color = !cloud.colors.empty();
  if (color && cloud.colors.size() != cloud.points.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "point cloud colors do not match point count");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, path.string() + ": cannot open for writing");
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";

  const std::size_t stride = 12 + (color ? 3 : 0);
  std::vector<char> body(stride * cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    char* rec = body.data() + i * stride;
    for (int c = 0; c < 3; ++c) put_le32(rec + 4 * c, static_cast<float>(cloud.points[i][c]));
    if (color) std::memcpy(rec + 12, cloud.colors[i].data(), 3);
  }
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, path.string() + ": write failed");
}

PointCloud read_pointcloud(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, path.string() + ": cannot open for reading");
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw Error(ErrorCode::kCorruptHeader, path.string() + ": missing 'ply' magic");

  std::size_t count = 0;
  std::vector<std::string> props;
  bool little = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      little = fmt == "binary_little_endian";
    } else if (key == "element") {
      std::string name;
      ss >> name >> count;
      if (name != "vertex") throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": only vertex elements are supported");
    } else if (key == "property") {
      std::string type, name;
      ss >> type >> name;
      props.push_back(type + " " + name);
    } else if (key == "end_header") {
      break;
    }
  }
  if (!little) throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": only binary_little_endian PLY is supported");
  const std::vector<std::string> xyz = {"float x", "float y", "float z"};
  const std::vector<std::string> xyzrgb = {"float x", "float y", "float z", "uchar red", "uchar green", "uchar blue"};
  const bool color = props == xyzrgb;
  if (!color && props != xyz) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": expected float x,y,z [uchar red,green,blue]");
  }

  const std::size_t stride = 12 + (color ? 3 : 0);
  std::vector<char> body(stride * count);
  if (!in.read(body.data(), static_cast<std::streamsize>(body.size()))) {
    throw Error(ErrorCode::kDimensionMismatch, path.string() + ": body shorter than the declared vertex count");
  }
  PointCloud cloud;
  cloud.points.resize(count);
  if (color) cloud.colors.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const char* rec = body.data() + i * stride;
    cloud.points[i] = Vec3(get_le32(rec), get_le32(rec + 4), get_le32(rec + 8));
    if (color) std::memcpy(cloud.colors[i].data(), rec + 12, 3);
  }
  return cloud;
}

}  // namespace panoalign::io
