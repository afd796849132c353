#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "elastovox/grid.hpp"
#include "elastovox/solver.hpp"

namespace elastovox {

/// A parsed scene file.
///
/// JSON document; every field except "shape" and "resolution" is optional and
/// unknown keys are rejected:
///   shape:      {"type": "box", "min": [x,y,z], "max": [x,y,z]}
///             | {"type": "sphere", "center": [x,y,z], "radius": r}
///             | {"type": "mesh", "path": "file.obj"}   (relative to the scene file)
///             | {"type": "voxels", "cells": [[i,j,k], ...]}
///   resolution: [nx, ny, nz]
///   spacing:    voxel edge length; omitted or <= 0 fits the shape's bounding box
///   origin:     [x,y,z] world position of lattice vertex (0,0,0)
///   material:   {"model": "corotational"|"neohookean"|"stvk", "e": Pa, "nu": -, "rho": kg/m^3}
///   fixed:      [{"min": [..], "max": [..]}, ...]  boxes of Dirichlet vertices
///   gravity:    [gx, gy, gz]
///   forces:     [{"region": {"min","max"}, "force": [fx,fy,fz]}, ...]  N per vertex
///   torques:    [{"region": {..}, "center": [..], "axis": [..], "magnitude": k}, ...]
///   dt, frames, damping (velocity scale 1/(1 + damping dt) per step),
///   hourglass (penalty on non-affine voxel modes, default 0.2)
///   solver:     {"max_outer", "max_inner", "tol_outer", "tol_inner", "latent",
///                "inner": "jacobi"|"direct"}
struct SceneFile {
  SceneSpec spec;
  SolverOptions solver;
  std::string canonical;   // compact sorted-key dump of the document
  std::uint64_t hash = 0;  // FNV-1a 64 of `canonical`
};

SceneFile parse_scene(const std::string& text, const std::filesystem::path& base_dir = {});
SceneFile load_scene(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);

} // namespace elastovox
