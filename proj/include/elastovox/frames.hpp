#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "elastovox/grid.hpp"
#include "elastovox/material_spec.hpp"

namespace elastovox {

/// Frame files are plain text, one active vertex per line: "index x y z"
/// with 17 significant digits. Frame 0 is the initial state.
std::string frame_name(int frame);
void write_frame(const std::filesystem::path& path, const Positions& q);
Positions read_frame(const std::filesystem::path& path);

struct FrameStats {
  int frame = 0;
  int outer_iterations = 0;              // #R1
  int inner_iterations = 0;              // #R2, summed over the outer loop
  double inner_per_outer = 0.0;          // #R2 averaged per outer iteration
  double linear_residual = 0.0;          // ||A q - b|| of the last inner solve
  double step_residual = 0.0;            // step equations at the final q
  double force_norm = 0.0;
  double wall_ms = 0.0;
  bool converged = false;
};

/// Everything needed to rebuild the statistics row of a run.
struct RunManifest {
  std::string tag = "solver";            // "solver" or "oracle"
  std::string scene_hash;
  MaterialSpec material;
  double fit_loss = 0.0;                 // loss of the net used (0 for the oracle)
  Eigen::Vector3i resolution = Eigen::Vector3i::Zero();
  double spacing = 0.0;
  int voxels = 0;
  int dofs = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<FrameStats> frames;        // one per step (frame 1..n)
  std::vector<std::string> files;        // frame files, frame 0 first
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

struct FrameComparison {
  int frame = 0;
  double rms = 0.0;            // sqrt(mean over vertices of |a - b|^2)
  double max = 0.0;            // max vertex distance
  double relative = 0.0;       // ||a - b|| / ||b - b_0||, b_0 the initial frame of B
  double residual_a = 0.0;     // step residual / ||f|| recorded by run A
  double residual_b = 0.0;
};

/// Frame-by-frame comparison of two run directories with matching layouts.
/// Throws a parse error on mismatched frame counts or vertex layouts.
std::vector<FrameComparison> compare_runs(const std::filesystem::path& a, const std::filesystem::path& b);

/// Whitespace-separated table with a header line, one row per frame.
std::string comparison_table(const std::vector<FrameComparison>& rows);

} // namespace elastovox
