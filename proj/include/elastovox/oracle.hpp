#pragma once

#include <vector>

#include <Eigen/SparseCore>

#include "elastovox/defgrad.hpp"
#include "elastovox/grid.hpp"
#include "elastovox/material_spec.hpp"

namespace elastovox {

struct OracleConfig {
  // Converged once ||gradient||_inf over free DoFs <= tol * e * spacing^2.
  double tol = 1.0e-10;
  int max_iters = 200;
  double backtrack = 0.5;
  double armijo = 1.0e-4;
  int max_line_search = 40;
  // Per-voxel Hessian eigenvalues are clamped to at least clamp * |trace|.
  double clamp = 1.0e-8;

  void validate() const;
};

struct NewtonReport {
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> objective_history; // objective after each accepted step, first entry at start
  bool halved = false;                   // the step was retried as two half steps
};

/// Implicit Euler objective with the analytic energy:
///   sum_v m_v/(2h^2) |q_v - qhat_v|^2 + sum_i V Psi(F_i).
double newton_objective(const SimGrid& grid, const DefGradKernel& kernel,
                        const MaterialSpec& material, double h, const Positions& q_hat,
                        const Positions& q);

/// Gradient of newton_objective, zero on fixed vertices.
Positions newton_gradient(const SimGrid& grid, const DefGradKernel& kernel,
                          const MaterialSpec& material, double h, const Positions& q_hat,
                          const Positions& q);

/// Sparse Hessian (3n x 3n) with every per-voxel block projected to SPD.
Eigen::SparseMatrix<double> newton_hessian(const SimGrid& grid, const DefGradKernel& kernel,
                                           const MaterialSpec& material, double h,
                                           const Positions& q, double clamp);

/// One implicit Euler step minimized by damped Newton with backtracking.
/// q_dot is scaled by 1/(1 + damping h) before the step, like the solver.
/// On line-search failure the step is retried once as two half steps; a
/// second failure throws a solve error.
NewtonReport newton_step(Positions& q, Positions& q_dot, const SimGrid& grid,
                         const DefGradKernel& kernel, const MaterialSpec& material, double h,
                         const Positions& f_ext, const OracleConfig& cfg, double damping = 0.0);

/// Exact solve of an SPD system by sparse LDL^T. Throws a solve error
/// reporting the smallest pivot if the matrix is not positive definite.
VectorXd direct_solve(const Eigen::SparseMatrix<double>& A, const VectorXd& rhs);

/// Solves A x = rhs with the DoFs flagged in `pinned` held at their values in
/// x (their rows are dropped and their columns moved to the right-hand side).
void direct_solve_pinned(const Eigen::SparseMatrix<double>& A, const VectorXd& rhs,
                         const std::vector<std::uint8_t>& pinned, VectorXd& x);

} // namespace elastovox
