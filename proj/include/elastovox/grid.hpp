#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "elastovox/material_spec.hpp"
#include "elastovox/mesh.hpp"
#include "elastovox/types.hpp"

namespace elastovox {

struct BoxShape {
  Vector3d min = Vector3d::Zero();
  Vector3d max = Vector3d::Ones();
};

struct SphereShape {
  Vector3d center = Vector3d::Zero();
  double radius = 1.0;
};

struct MeshShape {
  std::filesystem::path path;
  TriangleMesh mesh;
};

/// Explicit voxel list in lattice coordinates.
struct VoxelListShape {
  std::vector<Eigen::Vector3i> cells;
};

using Shape = std::variant<BoxShape, SphereShape, MeshShape, VoxelListShape>;

struct AlignedBox {
  Vector3d min;
  Vector3d max;
  bool contains(const Vector3d& p, double eps) const {
    return (p.array() >= min.array() - eps).all() && (p.array() <= max.array() + eps).all();
  }
};

/// Constant force applied to every vertex inside `region`.
struct RegionForce {
  AlignedBox region;
  Vector3d force = Vector3d::Zero();
};

/// Tangential load about an axis through `center`: each vertex in `region`
/// receives magnitude * axis x (x - center), evaluated at the rest position
/// and held constant afterwards.
struct RegionTorque {
  AlignedBox region;
  Vector3d center = Vector3d::Zero();
  Vector3d axis = Vector3d::UnitX();
  double magnitude = 0.0;
};

struct SceneSpec {
  Shape shape = BoxShape{};
  Eigen::Vector3i resolution = Eigen::Vector3i::Ones();
  // spacing <= 0 means "fit the shape's bounding box".
  double spacing = 0.0;
  std::optional<Vector3d> origin;
  MaterialSpec material;
  std::vector<AlignedBox> fixed_regions;
  Vector3d gravity = Vector3d::Zero();
  std::vector<RegionForce> forces;
  std::vector<RegionTorque> torques;
  double dt = 1.0e-3;
  int frames = 1;
  // Velocity decay rate (1/s); q_dot is scaled by 1/(1 + damping*dt) each step.
  double damping = 0.0;
  // Hourglass penalty as a fraction of the Young's modulus (see DefGradKernel).
  double hourglass = 0.2;

  void validate() const;
};

struct SimGrid {
  Eigen::Vector3i resolution = Eigen::Vector3i::Zero();
  double spacing = 0.0;
  Vector3d origin = Vector3d::Zero();

  std::vector<std::uint8_t> occupancy;       // nx*ny*nz, x fastest
  std::vector<int> vertex_index;              // (nx+1)(ny+1)(nz+1), -1 if inactive
  std::vector<Eigen::Vector3i> vertex_lattice;
  std::vector<Eigen::Vector3i> voxel_lattice; // occupied voxels, in scan order
  std::vector<std::array<int, 8>> voxel_corners;

  Positions rest_positions;
  VectorXd mass;
  std::vector<std::uint8_t> fixed;

  int num_vertices() const { return static_cast<int>(vertex_lattice.size()); }
  int num_voxels() const { return static_cast<int>(voxel_lattice.size()); }
  double voxel_volume() const { return spacing * spacing * spacing; }

  int voxel_linear(int i, int j, int k) const {
    return i + resolution.x() * (j + resolution.y() * k);
  }
  int lattice_linear(int i, int j, int k) const {
    return i + (resolution.x() + 1) * (j + (resolution.y() + 1) * k);
  }
  bool occupied(int i, int j, int k) const { return occupancy[voxel_linear(i, j, k)] != 0; }

  /// Corner c of a voxel sits at lattice offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
  static Eigen::Vector3i corner_offset(int c) { return {c & 1, (c >> 1) & 1, (c >> 2) & 1}; }

  Vector3d lattice_point(const Eigen::Vector3i& ijk) const {
    return origin + spacing * ijk.cast<double>();
  }
  Vector3d voxel_center(const Eigen::Vector3i& ijk) const {
    return origin + spacing * (ijk.cast<double>() + Vector3d::Constant(0.5));
  }
  bool any_fixed() const;
};

SimGrid rasterize(const SceneSpec& scene);

inline int active_dof_count(const SimGrid& grid) { return 3 * grid.num_vertices(); }

/// Gravity (m*g) plus region forces and torques, per active vertex.
Positions external_forces(const SceneSpec& scene, const SimGrid& grid);

/// Deformed rest-mesh vertices by trilinear interpolation of the grid displacement.
TriangleMesh deform_mesh(const SimGrid& grid, const Positions& q, const TriangleMesh& mesh);

} // namespace elastovox
