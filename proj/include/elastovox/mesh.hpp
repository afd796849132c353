#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace elastovox {

/// Triangle soup read from an ASCII OBJ-style file (`v x y z` and `f a b c`
/// records, 1-based indices; anything after a `/` in a face token is ignored).
struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;

  Eigen::Vector3d bbox_min() const;
  Eigen::Vector3d bbox_max() const;
};

TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Signed crossings of the vertical line through (x, y) with the mesh,
/// returned as sorted z values. Used for parity inside tests.
std::vector<double> column_crossings(const TriangleMesh& mesh, double x, double y);

} // namespace elastovox
