#include "elastovox/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace elastovox {

namespace {

struct Bounds {
  Vector3d min;
  Vector3d max;
};

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

Bounds shape_bounds(const Shape& shape) {
  return std::visit(
      overloaded{
          [](const BoxShape& b) { return Bounds{b.min, b.max}; },
          [](const SphereShape& s) {
            return Bounds{s.center.array() - s.radius, s.center.array() + s.radius};
          },
          [](const MeshShape& m) { return Bounds{m.mesh.bbox_min(), m.mesh.bbox_max()}; },
          [](const VoxelListShape& v) {
            Eigen::Vector3i hi = Eigen::Vector3i::Zero();
            for (const auto& c : v.cells) hi = hi.cwiseMax(c + Eigen::Vector3i::Ones());
            return Bounds{Vector3d::Zero(), hi.cast<double>()};
          },
      },
      shape);
}

void mark_mesh_occupancy(const TriangleMesh& mesh, SimGrid& grid) {
  const auto& res = grid.resolution;
  // Offsetting the ray by an irrational fraction of a voxel keeps it away
  // from lattice-aligned mesh edges and vertices.
  const double jitter_x = 1.0e-7 * std::sqrt(2.0) * grid.spacing;
  const double jitter_y = 1.0e-7 * std::sqrt(3.0) * grid.spacing;
  for (int j = 0; j < res.y(); ++j) {
    for (int i = 0; i < res.x(); ++i) {
      const Vector3d c = grid.voxel_center({i, j, 0});
      const auto zs = column_crossings(mesh, c.x() + jitter_x, c.y() + jitter_y);
      if (zs.size() % 2 != 0) {
        std::ostringstream msg;
        msg << "non-watertight mesh: odd number of surface crossings (" << zs.size()
            << ") in voxel column (" << i << ", " << j << ")";
        throw parse_error(msg.str());
      }
      for (int k = 0; k < res.z(); ++k) {
        const double z = grid.voxel_center({i, j, k}).z();
        const auto below = std::lower_bound(zs.begin(), zs.end(), z) - zs.begin();
        if (below % 2 == 1) grid.occupancy[grid.voxel_linear(i, j, k)] = 1;
      }
    }
  }
}

} // namespace

void SceneSpec::validate() const {
  if (!(dt > 0.0)) throw parse_error("dt must be positive");
  if ((resolution.array() < 1).any()) throw parse_error("resolution components must be >= 1");
  if (frames < 0) throw parse_error("frames must be non-negative");
  if (damping < 0.0) throw parse_error("damping must be non-negative");
  if (!(hourglass >= 0.0)) throw parse_error("hourglass must be non-negative");
  material.validate();
}

bool SimGrid::any_fixed() const {
  return std::any_of(fixed.begin(), fixed.end(), [](std::uint8_t f) { return f != 0; });
}

SimGrid rasterize(const SceneSpec& scene) {
  scene.validate();

  SimGrid grid;
  grid.resolution = scene.resolution;
  const Bounds bounds = shape_bounds(scene.shape);
  if (scene.spacing > 0.0) {
    grid.spacing = scene.spacing;
  } else if (std::holds_alternative<VoxelListShape>(scene.shape)) {
    grid.spacing = 1.0;
  } else {
    const Vector3d extent = bounds.max - bounds.min;
    grid.spacing = (extent.array() / scene.resolution.cast<double>().array()).maxCoeff();
  }
  if (!(grid.spacing > 0.0)) throw parse_error("degenerate scene: zero grid spacing");
  grid.origin = scene.origin.value_or(
      std::holds_alternative<VoxelListShape>(scene.shape) ? Vector3d::Zero() : bounds.min);

  const auto& res = grid.resolution;
  grid.occupancy.assign(static_cast<std::size_t>(res.prod()), 0);

  std::visit(overloaded{
                 [&](const BoxShape& b) {
                   for (int k = 0; k < res.z(); ++k)
                     for (int j = 0; j < res.y(); ++j)
                       for (int i = 0; i < res.x(); ++i) {
                         const Vector3d c = grid.voxel_center({i, j, k});
                         if ((c.array() >= b.min.array()).all() && (c.array() <= b.max.array()).all())
                           grid.occupancy[grid.voxel_linear(i, j, k)] = 1;
                       }
                 },
                 [&](const SphereShape& s) {
                   for (int k = 0; k < res.z(); ++k)
                     for (int j = 0; j < res.y(); ++j)
                       for (int i = 0; i < res.x(); ++i)
                         if ((grid.voxel_center({i, j, k}) - s.center).norm() <= s.radius)
                           grid.occupancy[grid.voxel_linear(i, j, k)] = 1;
                 },
                 [&](const MeshShape& m) { mark_mesh_occupancy(m.mesh, grid); },
                 [&](const VoxelListShape& v) {
                   for (const auto& c : v.cells) {
                     if ((c.array() < 0).any() || (c.array() >= res.array()).any())
                       throw parse_error("voxel list cell outside the grid resolution");
                     grid.occupancy[grid.voxel_linear(c.x(), c.y(), c.z())] = 1;
                   }
                 },
             },
             scene.shape);

  // Occupied voxels and the active vertex set, both in x-fastest scan order.
  const int nlattice = (res.x() + 1) * (res.y() + 1) * (res.z() + 1);
  std::vector<std::uint8_t> active(static_cast<std::size_t>(nlattice), 0);
  for (int k = 0; k < res.z(); ++k)
    for (int j = 0; j < res.y(); ++j)
      for (int i = 0; i < res.x(); ++i) {
        if (!grid.occupied(i, j, k)) continue;
        grid.voxel_lattice.emplace_back(i, j, k);
        for (int c = 0; c < 8; ++c) {
          const Eigen::Vector3i v = Eigen::Vector3i(i, j, k) + SimGrid::corner_offset(c);
          active[grid.lattice_linear(v.x(), v.y(), v.z())] = 1;
        }
      }
  if (grid.voxel_lattice.empty()) throw parse_error("degenerate scene: no voxel is occupied");

  grid.vertex_index.assign(static_cast<std::size_t>(nlattice), -1);
  for (int k = 0; k <= res.z(); ++k)
    for (int j = 0; j <= res.y(); ++j)
      for (int i = 0; i <= res.x(); ++i) {
        const int l = grid.lattice_linear(i, j, k);
        if (!active[l]) continue;
        grid.vertex_index[l] = static_cast<int>(grid.vertex_lattice.size());
        grid.vertex_lattice.emplace_back(i, j, k);
      }

  const int nv = grid.num_vertices();
  grid.rest_positions.resize(3, nv);
  for (int v = 0; v < nv; ++v) grid.rest_positions.col(v) = grid.lattice_point(grid.vertex_lattice[v]);

  const double corner_mass = scene.material.rho * grid.voxel_volume() / 8.0;
  grid.mass = VectorXd::Zero(nv);
  grid.voxel_corners.reserve(grid.voxel_lattice.size());
  for (const auto& vox : grid.voxel_lattice) {
    std::array<int, 8> corners{};
    for (int c = 0; c < 8; ++c) {
      const Eigen::Vector3i v = vox + SimGrid::corner_offset(c);
      corners[c] = grid.vertex_index[grid.lattice_linear(v.x(), v.y(), v.z())];
      grid.mass[corners[c]] += corner_mass;
    }
    grid.voxel_corners.push_back(corners);
  }

  const double eps = 1.0e-9 * grid.spacing;
  grid.fixed.assign(static_cast<std::size_t>(nv), 0);
  for (int v = 0; v < nv; ++v)
    for (const auto& box : scene.fixed_regions)
      if (box.contains(grid.rest_positions.col(v), eps)) grid.fixed[v] = 1;

  return grid;
}

Positions external_forces(const SceneSpec& scene, const SimGrid& grid) {
  const int nv = grid.num_vertices();
  Positions f(3, nv);
  const double eps = 1.0e-9 * grid.spacing;
  for (int v = 0; v < nv; ++v) {
    const Vector3d x = grid.rest_positions.col(v);
    Vector3d fv = grid.mass[v] * scene.gravity;
    for (const auto& rf : scene.forces)
      if (rf.region.contains(x, eps)) fv += rf.force;
    for (const auto& t : scene.torques)
      if (t.region.contains(x, eps)) fv += t.magnitude * t.axis.normalized().cross(x - t.center);
    f.col(v) = fv;
  }
  return f;
}

TriangleMesh deform_mesh(const SimGrid& grid, const Positions& q, const TriangleMesh& mesh) {
  TriangleMesh out = mesh;
  const Positions disp = q - grid.rest_positions;
  const auto& res = grid.resolution;
  for (auto& p : out.vertices) {
    const Vector3d local = (p - grid.origin) / grid.spacing;
    Eigen::Vector3i cell = local.array().floor().cast<int>();
    cell = cell.cwiseMax(Eigen::Vector3i::Zero()).cwiseMin(res - Eigen::Vector3i::Ones());
    const Vector3d t = (local - cell.cast<double>()).cwiseMax(0.0).cwiseMin(1.0);
    Vector3d u = Vector3d::Zero();
    double wsum = 0.0;
    for (int c = 0; c < 8; ++c) {
      const Eigen::Vector3i o = SimGrid::corner_offset(c);
      const Eigen::Vector3i v = cell + o;
      const int idx = grid.vertex_index[grid.lattice_linear(v.x(), v.y(), v.z())];
      if (idx < 0) continue;
      const double w = (o.x() ? t.x() : 1.0 - t.x()) * (o.y() ? t.y() : 1.0 - t.y()) *
                       (o.z() ? t.z() : 1.0 - t.z());
      u += w * disp.col(idx);
      wsum += w;
    }
    if (wsum > 0.0) p += u / wsum;
  }
  return out;
}

} // namespace elastovox
