#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "parereg/geom/point_cloud.hpp"
#include "parereg/geom/transform.hpp"

namespace parereg::geom {

/// ASCII "x y z" per line. Blank lines and lines starting with '#' are skipped.
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

/// Binary little-endian PLY with float32 vertex x/y/z. Extra vertex
/// properties are skipped on read; only x/y/z are written.
PointCloud read_ply(const std::filesystem::path& path);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);

/// Dispatches on extension (.ply or .xyz/.txt).
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

/// {"r": [9 reals, row-major], "t": [3 reals]}
nlohmann::json to_json(const RigidTransform& transform);
RigidTransform transform_from_json(const nlohmann::json& j);

RigidTransform read_transform(const std::filesystem::path& path);
void write_transform(const std::filesystem::path& path, const RigidTransform& transform);

}  // namespace parereg::geom
