#include "elastovox/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <tuple>

#include <Eigen/Cholesky>

namespace elastovox {

SubspaceBasis build_subspace(const SimGrid& grid, int k) {
  const int nv = grid.num_vertices();
  const int ndof = 3 * nv;
  if (k < 0 || k > ndof) throw parse_error("subspace size must lie in [0, #DoFs]");

  const Eigen::Vector3i nlat = grid.resolution + Eigen::Vector3i::Ones();
  std::vector<Eigen::Vector3i> waves;
  for (int mz = 0; mz < nlat.z(); ++mz)
    for (int my = 0; my < nlat.y(); ++my)
      for (int mx = 0; mx < nlat.x(); ++mx) waves.emplace_back(mx, my, mz);
  const Vector3d extent = grid.resolution.cast<double>();
  auto wavenumber = [&](const Eigen::Vector3i& m) {
    return (m.cast<double>().array() / extent.array()).square().sum();
  };
  std::stable_sort(waves.begin(), waves.end(), [&](const auto& a, const auto& b) {
    return wavenumber(a) < wavenumber(b);
  });

  SubspaceBasis basis;
  basis.modes.resize(ndof, k);
  int found = 0;
  const double pi = std::numbers::pi;
  for (const auto& m : waves) {
    if (found == k) break;
    VectorXd phi(nv);
    for (int v = 0; v < nv; ++v) {
      const Eigen::Vector3i& ijk = grid.vertex_lattice[v];
      double value = 1.0;
      for (int a = 0; a < 3; ++a) value *= std::cos(pi * m(a) * (ijk(a) + 0.5) / nlat(a));
      phi(v) = grid.fixed[v] ? 0.0 : value;
    }
    for (int axis = 0; axis < 3 && found < k; ++axis) {
      VectorXd col = VectorXd::Zero(ndof);
      for (int v = 0; v < nv; ++v) col(3 * v + axis) = phi(v);
      const double norm0 = col.norm();
      if (norm0 == 0.0) continue;
      // Two passes of modified Gram-Schmidt.
      for (int pass = 0; pass < 2; ++pass)
        for (int j = 0; j < found; ++j) col -= basis.modes.col(j).dot(col) * basis.modes.col(j);
      const double norm = col.norm();
      if (norm < 1.0e-8 * norm0) continue;
      basis.modes.col(found++) = col / norm;
      basis.wavenumbers.push_back(m);
    }
  }
  if (found < k)
    throw parse_error("subspace size " + std::to_string(k) + " exceeds the " +
                      std::to_string(found) + " independent modes of this grid");
  return basis;
}

WarmStart subspace_warm_start(const SubspaceBasis& basis, const LinearAction& A,
                              const Positions& rhs, const Positions& q_current,
                              const std::vector<std::uint8_t>& fixed) {
  const int k = basis.size();
  WarmStart out{q_current, false};
  if (k == 0) return out;

  const Eigen::Index nv = q_current.cols();
  Positions Aq(3, nv);
  A(q_current, Aq);
  Positions r = rhs - Aq;
  for (Eigen::Index v = 0; v < nv; ++v)
    if (fixed[v]) r.col(v).setZero();

  MatrixXd AB(3 * nv, k);
  Positions col(3, nv), Acol(3, nv);
  for (int j = 0; j < k; ++j) {
    flat(col) = basis.modes.col(j);
    A(col, Acol);
    AB.col(j) = flat(Acol);
  }
  MatrixXd reduced = basis.modes.transpose() * AB;
  reduced = 0.5 * (reduced + reduced.transpose()).eval();
  Eigen::LLT<MatrixXd> llt(reduced);
  if (llt.info() != Eigen::Success) {
    std::cerr << "warning: singular reduced subspace system; skipping warm start\n";
    out.fallback = true;
    return out;
  }
  const VectorXd z = llt.solve(basis.modes.transpose() * flat(r));
  flat(out.q) += basis.modes * z;
  return out;
}

} // namespace elastovox
