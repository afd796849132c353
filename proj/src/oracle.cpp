#include "elastovox/oracle.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "elastovox/material.hpp"

namespace elastovox {

void OracleConfig::validate() const {
  if (!(tol > 0.0)) throw parse_error("oracle tolerance must be positive");
  if (max_iters < 1) throw parse_error("oracle max_iters must be at least 1");
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw parse_error("backtracking factor must lie in (0, 1)");
  if (!(armijo > 0.0 && armijo < 0.5)) throw parse_error("sufficient-decrease constant must lie in (0, 0.5)");
  if (max_line_search < 1) throw parse_error("max_line_search must be at least 1");
  if (!(clamp > 0.0)) throw parse_error("eigenvalue clamp must be positive");
}

double newton_objective(const SimGrid& grid, const DefGradKernel& kernel,
                        const MaterialSpec& material, double h, const Positions& q_hat,
                        const Positions& q) {
  const Lame lame = material.lame();
  double inertia = 0.0;
  for (int v = 0; v < grid.num_vertices(); ++v) inertia += grid.mass(v) * (q.col(v) - q_hat.col(v)).squaredNorm();
  double elastic = 0.0;
  for (int i = 0; i < kernel.num_voxels(); ++i)
    elastic += target_energy(material.model, lame, kernel.deformation_gradient(q, i)) +
               material.e * kernel.hourglass_energy(q, i);
  return 0.5 * inertia / (h * h) + grid.voxel_volume() * elastic;
}

Positions newton_gradient(const SimGrid& grid, const DefGradKernel& kernel,
                          const MaterialSpec& material, double h, const Positions& q_hat,
                          const Positions& q) {
  const Lame lame = material.lame();
  Positions g = (q - q_hat) * (grid.mass / (h * h)).asDiagonal();
  const double vol = grid.voxel_volume();
  for (int i = 0; i < kernel.num_voxels(); ++i) {
    kernel.scatter(vol * target_stress(material.model, lame, kernel.deformation_gradient(q, i)), i, g);
    kernel.add_hourglass_force(q, i, vol * material.e, g);
  }
  for (int v = 0; v < grid.num_vertices(); ++v)
    if (grid.fixed[v]) g.col(v).setZero();
  return g;
}

Eigen::SparseMatrix<double> newton_hessian(const SimGrid& grid, const DefGradKernel& kernel,
                                           const MaterialSpec& material, double h,
                                           const Positions& q, double clamp) {
  const Lame lame = material.lame();
  const int n = grid.num_vertices();
  const double vol = grid.voxel_volume();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(kernel.num_voxels()) * 576 + 3 * n);
  for (int v = 0; v < n; ++v)
    for (int a = 0; a < 3; ++a) triplets.emplace_back(3 * v + a, 3 * v + a, grid.mass(v) / (h * h));

  const auto& corners = kernel.incidence();
  for (int i = 0; i < kernel.num_voxels(); ++i) {
    const Eigen::Matrix<double, 9, 9> H =
        target_stress_derivative(material.model, lame, kernel.deformation_gradient(q, i));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(H);
    const double floor = clamp * std::abs(H.trace());
    const Eigen::Matrix<double, 9, 1> lam = eig.eigenvalues().cwiseMax(floor);
    const Eigen::Matrix<double, 9, 9> Hspd = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    const Mat9x24 G = kernel.block(i);
    Mat24 K = vol * G.transpose() * Hspd * G;
    for (int c = 0; c < 8; ++c)
      for (int d = 0; d < 8; ++d)
        K.block<3, 3>(3 * c, 3 * d).diagonal().array() += vol * material.e * kernel.hourglass_matrix()(c, d);
    for (int c = 0; c < 8; ++c)
      for (int d = 0; d < 8; ++d)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            triplets.emplace_back(3 * corners[i][c] + a, 3 * corners[i][d] + b, K(3 * c + a, 3 * d + b));
  }
  Eigen::SparseMatrix<double> A(3 * n, 3 * n);
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

VectorXd direct_solve(const Eigen::SparseMatrix<double>& A, const VectorXd& rhs) {
  if (A.rows() != A.cols() || A.rows() != rhs.size()) throw internal_error("direct_solve: size mismatch");
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw solve_error("direct solve: factorization failed");
  const double pivot = ldlt.vectorD().minCoeff();
  if (!(pivot > 0.0)) {
    std::ostringstream msg;
    msg << "direct solve: matrix is not positive definite (smallest pivot " << pivot << ")";
    throw solve_error(msg.str());
  }
  return ldlt.solve(rhs);
}

void direct_solve_pinned(const Eigen::SparseMatrix<double>& A, const VectorXd& rhs,
                         const std::vector<std::uint8_t>& pinned, VectorXd& x) {
  const Eigen::Index n = A.rows();
  std::vector<Eigen::Index> free_index(static_cast<std::size_t>(n), -1);
  Eigen::Index nf = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    if (!pinned[j]) free_index[j] = nf++;
  if (nf == 0) return;

  VectorXd b(nf);
  for (Eigen::Index j = 0; j < n; ++j)
    if (free_index[j] >= 0) b(free_index[j]) = rhs(j);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(A.nonZeros()));
  for (int col = 0; col < A.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, col); it; ++it) {
      const Eigen::Index r = free_index[it.row()];
      if (r < 0) continue;
      const Eigen::Index c = free_index[it.col()];
      if (c >= 0)
        triplets.emplace_back(r, c, it.value());
      else
        b(r) -= it.value() * x(it.col());
    }
  Eigen::SparseMatrix<double> Aff(nf, nf);
  Aff.setFromTriplets(triplets.begin(), triplets.end());
  const VectorXd xf = direct_solve(Aff, b);
  for (Eigen::Index j = 0; j < n; ++j)
    if (free_index[j] >= 0) x(j) = xf(free_index[j]);
}

namespace {

// Minimizes the step objective from q in place. Returns false on line-search failure.
bool newton_minimize(Positions& q, const Positions& q_hat, const SimGrid& grid,
                     const DefGradKernel& kernel, const MaterialSpec& material, double h,
                     const OracleConfig& cfg, NewtonReport& report) {
  std::vector<std::uint8_t> pinned(3 * static_cast<std::size_t>(grid.num_vertices()));
  for (int v = 0; v < grid.num_vertices(); ++v)
    pinned[3 * v] = pinned[3 * v + 1] = pinned[3 * v + 2] = grid.fixed[v];
  const double gtol = cfg.tol * material.e * grid.spacing * grid.spacing;

  double phi = newton_objective(grid, kernel, material, h, q_hat, q);
  report.objective_history.push_back(phi);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Positions g = newton_gradient(grid, kernel, material, h, q_hat, q);
    report.gradient_norm = g.cwiseAbs().maxCoeff();
    if (!std::isfinite(report.gradient_norm)) throw solve_error("oracle: non-finite gradient");
    if (report.gradient_norm <= gtol) return true;

    const auto H = newton_hessian(grid, kernel, material, h, q, cfg.clamp);
    VectorXd dir = VectorXd::Zero(q.size());
    direct_solve_pinned(H, -flat(g), pinned, dir);
    const double slope = flat(g).dot(dir);
    // Newton decrement at the round-off level of the objective: no further
    // progress is measurable.
    if (-slope <= 1.0e-13 * std::abs(phi)) return true;

    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < cfg.max_line_search; ++ls) {
      Positions trial = q;
      flat(trial) += alpha * dir;
      const double phi_trial = newton_objective(grid, kernel, material, h, q_hat, trial);
      // Near the minimum the decrease drops below the round-off of the
      // objective; there a step that shrinks the gradient is accepted instead.
      const bool decrease = std::isfinite(phi_trial) && phi_trial <= phi + cfg.armijo * alpha * slope;
      const bool in_noise = std::isfinite(phi_trial) && std::abs(phi_trial - phi) <= 1.0e-12 * std::abs(phi) &&
                            newton_gradient(grid, kernel, material, h, q_hat, trial).cwiseAbs().maxCoeff() <
                                report.gradient_norm;
      if (decrease || in_noise) {
        q = trial;
        phi = phi_trial;
        accepted = true;
        break;
      }
      alpha *= cfg.backtrack;
    }
    ++report.iterations;
    if (!accepted) return false;
    report.objective_history.push_back(phi);
  }
  const Positions g = newton_gradient(grid, kernel, material, h, q_hat, q);
  report.gradient_norm = g.cwiseAbs().maxCoeff();
  return report.gradient_norm <= gtol;
}

} // namespace

NewtonReport newton_step(Positions& q, Positions& q_dot, const SimGrid& grid,
                         const DefGradKernel& kernel, const MaterialSpec& material, double h,
                         const Positions& f_ext, const OracleConfig& cfg, double damping) {
  cfg.validate();
  if (!(h > 0.0)) throw parse_error("time step must be positive");
  const Positions inv_mass_f = f_ext * grid.mass.cwiseInverse().asDiagonal();

  auto attempt = [&](Positions& qs, Positions& vs, double hs, NewtonReport& report) {
    const Positions q_n = qs;
    const Positions v_n = vs / (1.0 + damping * hs);
    const Positions q_hat = q_n + hs * v_n + hs * hs * inv_mass_f;
    Positions trial = q_n;
    if (!newton_minimize(trial, q_hat, grid, kernel, material, hs, cfg, report)) return false;
    vs = (trial - q_n) / hs;
    for (int v = 0; v < grid.num_vertices(); ++v)
      if (grid.fixed[v]) vs.col(v).setZero();
    qs = trial;
    return true;
  };

  NewtonReport report;
  Positions q1 = q, v1 = q_dot;
  if (attempt(q1, v1, h, report)) {
    q = q1;
    q_dot = v1;
    return report;
  }
  report = NewtonReport{};
  report.halved = true;
  Positions q2 = q, v2 = q_dot;
  if (attempt(q2, v2, 0.5 * h, report) && attempt(q2, v2, 0.5 * h, report)) {
    q = q2;
    q_dot = v2;
    return report;
  }
  throw solve_error("oracle: line search failed even with a halved time step");
}

} // namespace elastovox
