#pragma once

#include <optional>
#include <vector>

#include <Eigen/SparseCore>

#include "elastovox/defgrad.hpp"
#include "elastovox/grid.hpp"
#include "elastovox/material.hpp"
#include "elastovox/subspace.hpp"

namespace elastovox {

enum class InnerMethod { Jacobi, Direct };

struct SolverOptions {
  int max_outer = 5;
  int max_inner = 108;
  // Relative position change between outer iterations, measured against the
  // current displacement from rest (floored at 1e-3 voxel).
  double tol_outer = 1.0e-4;
  // Relative Jacobi update, same scale as tol_outer.
  double tol_inner = 1.0e-4;
  int latent = 18;               // subspace modes; 0 disables the warm start
  InnerMethod inner = InnerMethod::Jacobi;
  int threads = 1;
  // true: the right-hand side holds the strain and projection fixed (the
  // literal lagged force). false: the lagged matrix is kept but the force is
  // the exact gradient of the fitted energy, so each outer iteration is a
  // quasi-Newton step and the fixed point is a true equilibrium.
  bool lagged_force = false;
};

/// Lagged per-voxel quantities from the latest outer evaluation.
struct VoxelCache {
  SvdTriple<double> svd;
  Matrix3d strain;      // world-frame neural strain V (N + N^T) V^T
  Matrix3d strain_sq;   // strain * strain^T
  Matrix3d projection;  // U V^T
  Matrix3d stress;      // dE/dF used as the elastic force (exact or lagged)
  double energy = 0.0;
};

struct StepDiagnostics {
  int outer_iterations = 0;
  int inner_iterations = 0;             // total over all outer iterations
  std::vector<int> inner_per_outer;
  std::vector<double> residual_history; // ||A q - b||_2 over free DoFs at each outer start
  std::vector<double> objective_history;// implicit-Euler objective at each outer start
  std::vector<double> contraction;      // mean Jacobi update ratio per outer iteration
  std::vector<bool> inner_converged;
  std::vector<double> step_lengths;     // accepted outer step fraction (exact-force mode)
  double linear_residual = 0.0;         // ||A q - b|| of the last inner solve, free DoFs
  double force_norm = 0.0;              // ||f|| over free DoFs
  bool converged = false;
};

struct SolverState {
  Positions q;
  Positions q_dot;
  Positions q_hat;
  std::vector<VoxelCache> cache;
  StepDiagnostics diagnostics;

  static SolverState at_rest(const SimGrid& grid);
};

/// The lagged global system A q = b with
///   A = M/h^2 + sum_i omega_i G_i^T (C_i (x) I) G_i,  C_i = Nc_i Nc_i^T,
///   b = M/h^2 (q^n + h qdot^n) + f + sum_i G_i^T vec(omega F_i C_i - dE_i/dF),
/// F_i taken at the lag point. With the lagged force dE/dF = omega (F Nc - P) Nc
/// the elastic part reduces to sum_i omega_i G_i^T vec(P_i Nc_i).
/// A acts identically on the x, y and z components.
class LaggedSystem {
public:
  LaggedSystem(const SimGrid& grid, const DefGradKernel& kernel, double omega, double h,
               const std::vector<VoxelCache>& cache);

  void apply(const Positions& x, Positions& out) const;
  LinearAction action() const {
    return [this](const Positions& x, Positions& out) { apply(x, out); };
  }

  /// Per-vertex diagonal entry (shared by the three components).
  const VectorXd& diagonal() const { return diag_; }

  /// Elastic part of b scattered to vertices, for the lag point `q_lag`.
  Positions elastic_rhs(const Positions& q_lag) const;

  /// Dense-DoF sparse matrix (3n x 3n) of the same operator.
  Eigen::SparseMatrix<double> assemble() const;

  double omega() const { return omega_; }

private:
  const SimGrid& grid_;
  const DefGradKernel& kernel_;
  double omega_;
  double mass_scale_;
  const std::vector<VoxelCache>& cache_;
  VectorXd diag_;
};

struct JacobiResult {
  VectorXd x;
  int iterations = 0;
  bool converged = false;
  double contraction = 0.0; // mean ratio of consecutive update norms
};

/// x <- x + D^{-1} (b - A x) until ||dx||_inf <= tol * scale, scale =
/// max(||x - reference||_inf, min_scale) (or ||x||_inf without a reference).
/// Pinned DoFs keep their initial values.
JacobiResult jacobi_solve(const std::function<void(const VectorXd&, VectorXd&)>& A,
                          const VectorXd& diag, const VectorXd& rhs, VectorXd x0, double tol,
                          int max_iters, const std::vector<std::uint8_t>* pinned = nullptr,
                          const VectorXd* reference = nullptr, double min_scale = 0.0);

/// Everything a time step needs besides the state.
struct SolverContext {
  const SimGrid& grid;
  const DefGradKernel& kernel;
  const MaterialNet& material;
  Positions f_ext;
  double h = 1.0e-3;
  double damping = 0.0;
  SolverOptions options;
  std::optional<SubspaceBasis> basis;

  SolverContext(const SimGrid& grid, const DefGradKernel& kernel, const MaterialNet& material,
                Positions f_ext, double h, double damping, SolverOptions options);

  double omega() const { return grid.voxel_volume() * material.material.e; }
};

/// SVD, neural strain and projection of every voxel at q; returns sum E_i.
double evaluate_cache(const SolverContext& ctx, const Positions& q, std::vector<VoxelCache>& cache);

/// One implicit Euler step. Throws a solve error on NaN or divergence.
void step(SolverState& state, const SolverContext& ctx);

/// Residual of the step equations at q with frames lagged at q:
///   M/h^2 (q - q^n - h qdot^n) + sum_i G_i^T vec(dE_i/dF) - f,
/// zero on fixed vertices. `q_dot_n` is the (already damped) start velocity.
Positions step_residual(const SolverContext& ctx, const Positions& q_n, const Positions& q_dot_n,
                        const Positions& q);

/// Total linear momentum sum_v m_v qdot_v.
Vector3d linear_momentum(const SimGrid& grid, const Positions& q_dot);

} // namespace elastovox
