#pragma once

#include <functional>
#include <vector>

#include "elastovox/grid.hpp"

namespace elastovox {

/// Applies a symmetric operator to a full set of vertex vectors.
using LinearAction = std::function<void(const Positions& x, Positions& out)>;

/// Smooth low-frequency modes of the rasterized grid.
///
/// Each spatial mode is a separable cosine lattice wave
///   phi(i, j, k) = cos(pi mx (i + 1/2) / Nx) cos(pi my (j + 1/2) / Ny) cos(pi mz (k + 1/2) / Nz)
/// over the vertex lattice (N = vertices per axis), ordered by physical
/// wavenumber and replicated for the x, y and z components. Fixed DoFs are
/// zeroed and the columns Gram-Schmidt orthonormalized over the active DoFs.
struct SubspaceBasis {
  MatrixXd modes; // 3*num_vertices x k, column j is vec(Positions)
  std::vector<Eigen::Vector3i> wavenumbers; // spatial (mx, my, mz) of each column

  int size() const { return static_cast<int>(modes.cols()); }
};

SubspaceBasis build_subspace(const SimGrid& grid, int k);

struct WarmStart {
  Positions q;
  bool fallback = false; // reduced system was singular; q is the input unchanged
};

/// Galerkin correction in the basis: solves (B^T A B) z = B^T (rhs - A q) and
/// returns q + B z. Rows of fixed DoFs are zero in B, so pinned values survive.
WarmStart subspace_warm_start(const SubspaceBasis& basis, const LinearAction& A,
                              const Positions& rhs, const Positions& q_current,
                              const std::vector<std::uint8_t>& fixed);

} // namespace elastovox
