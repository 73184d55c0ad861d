#include "parereg/geom/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "parereg/error.hpp"

namespace parereg::geom {

namespace {

static_assert(std::endian::native == std::endian::little,
              "PLY I/O assumes a little-endian host");

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ifstream in(path, std::ios::in | mode);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ofstream out(path, std::ios::out | std::ios::trunc | mode);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "float" || type == "int32" ||
      type == "uint32" || type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  throw InputError("unsupported PLY property type: " + type);
}

}  // namespace

PointCloud read_xyz(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<Vec3> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double x = 0, y = 0, z = 0;
    if (!(ss >> x >> y >> z)) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected x y z");
    }
    pts.emplace_back(x, y, z);
  }
  return PointCloud(std::move(pts));
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  out.precision(17);
  for (const auto& p : cloud) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw InputError(path.string() + ": missing ply magic");
  }

  bool binary_le = false;
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::size_t stride = 0;
  std::array<std::ptrdiff_t, 3> offsets{-1, -1, -1};
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "end_header") break;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (word == "element") {
      std::string name;
      ss >> name;
      if (seen_vertex && !in_vertex) continue;
      in_vertex = name == "vertex";
      if (in_vertex) {
        ss >> vertex_count;
        seen_vertex = true;
      } else if (!seen_vertex) {
        throw InputError(path.string() + ": vertex must be the first PLY element");
      }
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ss >> type;
      if (type == "list") throw InputError(path.string() + ": list property in vertex element");
      ss >> name;
      const std::size_t size = ply_type_size(type);
      const int axis = name == "x" ? 0 : name == "y" ? 1 : name == "z" ? 2 : -1;
      if (axis >= 0) {
        if (size != 4 || (type != "float" && type != "float32")) {
          throw InputError(path.string() + ": vertex " + name + " must be float32");
        }
        offsets[static_cast<std::size_t>(axis)] = static_cast<std::ptrdiff_t>(stride);
      }
      stride += size;
    }
  }
  if (!binary_le) throw InputError(path.string() + ": only binary_little_endian PLY is supported");
  for (auto o : offsets) {
    if (o < 0) throw InputError(path.string() + ": vertex x/y/z properties missing");
  }

  std::vector<char> buf(stride * vertex_count);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw InputError(path.string() + ": truncated vertex data");
  }
  std::vector<Vec3> pts(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      float v = 0;
      std::memcpy(&v, buf.data() + i * stride + static_cast<std::size_t>(offsets[a]), sizeof v);
      pts[i][static_cast<Eigen::Index>(a)] = v;
    }
  }
  return PointCloud(std::move(pts));
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path, std::ios::binary);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : cloud) {
    const std::array<float, 3> v{static_cast<float>(p.x()), static_cast<float>(p.y()),
                                 static_cast<float>(p.z())};
    out.write(reinterpret_cast<const char*>(v.data()), sizeof v);
  }
  if (!out) throw InputError("write failed: " + path.string());
}

PointCloud read_cloud(const std::filesystem::path& path) {
  return path.extension() == ".ply" ? read_ply(path) : read_xyz(path);
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  if (path.extension() == ".ply") {
    write_ply(path, cloud);
  } else {
    write_xyz(path, cloud);
  }
}

nlohmann::json to_json(const RigidTransform& transform) {
  const Mat3& m = transform.r.matrix();
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r.push_back(m(i, j));
  }
  return {{"r", r}, {"t", {transform.t.x(), transform.t.y(), transform.t.z()}}};
}

RigidTransform transform_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("r") || !j.contains("t")) {
    throw InputError("transform JSON needs \"r\" and \"t\"");
  }
  const auto& r = j.at("r");
  const auto& t = j.at("t");
  if (!r.is_array() || r.size() != 9 || !t.is_array() || t.size() != 3) {
    throw InputError("transform JSON: \"r\" must have 9 entries and \"t\" 3");
  }
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) m(i, k) = r.at(static_cast<std::size_t>(3 * i + k)).get<double>();
  }
  RigidTransform out;
  out.r = Rotation::from_matrix(m);
  out.t = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  return out;
}

RigidTransform read_transform(const std::filesystem::path& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return transform_from_json(j);
}

void write_transform(const std::filesystem::path& path, const RigidTransform& transform) {
  auto out = open_out(path);
  out << to_json(transform).dump(2) << '\n';
}

}  // namespace parereg::geom
