#include "elastovox/solver.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "elastovox/oracle.hpp"
#include "parallel.hpp"

namespace elastovox {

namespace {

constexpr int kMaxBacktracks = 12;

double displacement_scale(const Positions& q, const Positions& rest, double floor) {
  return std::max((q - rest).cwiseAbs().maxCoeff(), floor);
}

double free_norm(const Positions& r, const std::vector<std::uint8_t>& fixed) {
  double sum = 0.0;
  for (Eigen::Index v = 0; v < r.cols(); ++v)
    if (!fixed[v]) sum += r.col(v).squaredNorm();
  return std::sqrt(sum);
}

void zero_fixed(Positions& r, const std::vector<std::uint8_t>& fixed) {
  for (Eigen::Index v = 0; v < r.cols(); ++v)
    if (fixed[v]) r.col(v).setZero();
}

std::vector<std::uint8_t> expand_pinned(const std::vector<std::uint8_t>& fixed) {
  std::vector<std::uint8_t> out(3 * fixed.size());
  for (std::size_t v = 0; v < fixed.size(); ++v) out[3 * v] = out[3 * v + 1] = out[3 * v + 2] = fixed[v];
  return out;
}

// M/h^2 (q^n + h qdot^n) + f.
Positions inertial_rhs(const SolverContext& ctx, const Positions& q_n, const Positions& q_dot_n) {
  const double inv_h2 = 1.0 / (ctx.h * ctx.h);
  Positions b = (q_n + ctx.h * q_dot_n) * (ctx.grid.mass * inv_h2).asDiagonal();
  b += ctx.f_ext;
  return b;
}

} // namespace

SolverState SolverState::at_rest(const SimGrid& grid) {
  SolverState s;
  s.q = grid.rest_positions;
  s.q_dot = Positions::Zero(3, grid.num_vertices());
  s.q_hat = grid.rest_positions;
  return s;
}

LaggedSystem::LaggedSystem(const SimGrid& grid, const DefGradKernel& kernel, double omega, double h,
                           const std::vector<VoxelCache>& cache)
    : grid_(grid), kernel_(kernel), omega_(omega), mass_scale_(1.0 / (h * h)), cache_(cache) {
  diag_ = grid.mass * mass_scale_;
  const auto& w = kernel.corner_weights();
  const auto& corners = kernel.incidence();
  for (int i = 0; i < kernel.num_voxels(); ++i) {
    const Matrix3d& C = cache[i].strain_sq;
    for (int c = 0; c < 8; ++c)
      diag_(corners[i][c]) += omega * (w[c].dot(C * w[c]) + kernel.hourglass_matrix()(c, c));
  }
}

void LaggedSystem::apply(const Positions& x, Positions& out) const {
  out = x * (grid_.mass * mass_scale_).asDiagonal();
  for (int i = 0; i < kernel_.num_voxels(); ++i) {
    const Matrix3d F = kernel_.deformation_gradient(x, i);
    kernel_.scatter(omega_ * F * cache_[i].strain_sq, i, out);
    kernel_.add_hourglass_force(x, i, omega_, out);
  }
}

Positions LaggedSystem::elastic_rhs(const Positions& q_lag) const {
  Positions out = Positions::Zero(3, grid_.num_vertices());
  for (int i = 0; i < kernel_.num_voxels(); ++i) {
    const Matrix3d F = kernel_.deformation_gradient(q_lag, i);
    kernel_.scatter(omega_ * F * cache_[i].strain_sq - cache_[i].stress, i, out);
  }
  return out;
}

Eigen::SparseMatrix<double> LaggedSystem::assemble() const {
  const int n = grid_.num_vertices();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(kernel_.num_voxels()) * 64 * 3 + 3 * n);
  for (int v = 0; v < n; ++v)
    for (int a = 0; a < 3; ++a) triplets.emplace_back(3 * v + a, 3 * v + a, grid_.mass(v) * mass_scale_);
  const auto& w = kernel_.corner_weights();
  const auto& corners = kernel_.incidence();
  for (int i = 0; i < kernel_.num_voxels(); ++i) {
    const Matrix3d& C = cache_[i].strain_sq;
    for (int c = 0; c < 8; ++c)
      for (int d = 0; d < 8; ++d) {
        const double k = omega_ * (w[c].dot(C * w[d]) + kernel_.hourglass_matrix()(c, d));
        for (int a = 0; a < 3; ++a)
          triplets.emplace_back(3 * corners[i][c] + a, 3 * corners[i][d] + a, k);
      }
  }
  Eigen::SparseMatrix<double> A(3 * n, 3 * n);
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

JacobiResult jacobi_solve(const std::function<void(const VectorXd&, VectorXd&)>& A,
                          const VectorXd& diag, const VectorXd& rhs, VectorXd x0, double tol,
                          int max_iters, const std::vector<std::uint8_t>* pinned,
                          const VectorXd* reference, double min_scale) {
  JacobiResult out;
  out.x = std::move(x0);
  VectorXd Ax(out.x.size());
  double prev_norm = 0.0;
  double ratio_sum = 0.0;
  int ratio_count = 0;
  for (int k = 0; k < max_iters; ++k) {
    A(out.x, Ax);
    VectorXd dx = (rhs - Ax).cwiseQuotient(diag);
    if (pinned)
      for (Eigen::Index j = 0; j < dx.size(); ++j)
        if ((*pinned)[j]) dx(j) = 0.0;
    out.x += dx;
    out.iterations = k + 1;

    const double dnorm = dx.cwiseAbs().maxCoeff();
    if (!std::isfinite(dnorm)) throw solve_error("Jacobi iteration produced a non-finite update");
    if (k > 0 && prev_norm > 0.0) {
      ratio_sum += dnorm / prev_norm;
      ++ratio_count;
    }
    prev_norm = dnorm;
    const double scale = std::max(
        reference ? (out.x - *reference).cwiseAbs().maxCoeff() : out.x.cwiseAbs().maxCoeff(),
        min_scale);
    if (dnorm <= tol * scale) {
      out.converged = true;
      break;
    }
  }
  out.contraction = ratio_count > 0 ? ratio_sum / ratio_count : 0.0;
  return out;
}

SolverContext::SolverContext(const SimGrid& grid_, const DefGradKernel& kernel_,
                             const MaterialNet& material_, Positions f_ext_, double h_,
                             double damping_, SolverOptions options_)
    : grid(grid_), kernel(kernel_), material(material_), f_ext(std::move(f_ext_)), h(h_),
      damping(damping_), options(options_) {
  if (!(h > 0.0)) throw parse_error("time step must be positive");
  if (damping < 0.0) throw parse_error("damping must be non-negative");
  if (options.latent > 0) basis = build_subspace(grid, options.latent);
}

double evaluate_cache(const SolverContext& ctx, const Positions& q, std::vector<VoxelCache>& cache) {
  const int nvox = ctx.kernel.num_voxels();
  cache.resize(static_cast<std::size_t>(nvox));
  const double omega = ctx.omega();
  const int threads = std::max(1, ctx.options.threads);
  const int chunk = 256;
  const int nchunks = (nvox + chunk - 1) / chunk;
  std::vector<double> partial(static_cast<std::size_t>(nchunks), 0.0);

  detail::parallel_for(nchunks, threads, [&](int b) {
    const int begin = b * chunk;
    const int end = std::min(nvox, begin + chunk);
    StrainNet::Batch3 S(3, end - begin);
    for (int i = begin; i < end; ++i) {
      cache[i].svd = svd3<double>(ctx.kernel.deformation_gradient(q, i));
      S.col(i - begin) = cache[i].svd.S;
    }
    const StrainNet::Batch9 raw = ctx.material.net.forward(S);
    double sum = 0.0;
    for (int i = begin; i < end; ++i) {
      VoxelCache& c = cache[i];
      const Eigen::Map<const Matrix3d> N(raw.col(i - begin).data());
      const Matrix3d sym = N + N.transpose();
      const Matrix3d Q = c.svd.S.asDiagonal() * sym;
      c.energy = 0.5 * omega * (Q - Matrix3d::Identity()).squaredNorm() +
                 omega * ctx.kernel.hourglass_energy(q, i);
      c.strain = c.svd.V * sym * c.svd.V.transpose();
      c.strain_sq = c.strain * c.strain.transpose();
      c.projection = neural_projection(c.svd);
      if (ctx.options.lagged_force) {
        const Matrix3d F = c.svd.reconstruct();
        c.stress = omega * (F * c.strain - c.projection) * c.strain;
      } else {
        c.stress = neural_stress(ctx.material.net, omega, c.svd);
      }
      sum += c.energy;
    }
    partial[static_cast<std::size_t>(b)] = sum;
  });

  double total = 0.0;
  for (double p : partial) total += p; // fixed order keeps runs reproducible
  return total;
}

void step(SolverState& state, const SolverContext& ctx) {
  const SimGrid& grid = ctx.grid;
  const SolverOptions& opt = ctx.options;
  const int n = grid.num_vertices();
  const double h = ctx.h;
  const double inv_h2 = 1.0 / (h * h);
  const double floor = 1.0e-3 * grid.spacing;

  const Positions q_n = state.q;
  const Positions q_dot_n = state.q_dot / (1.0 + ctx.damping * h);
  state.q_hat = q_n + h * q_dot_n + h * h * ctx.f_ext * grid.mass.cwiseInverse().asDiagonal();
  const Positions b_inertial = inertial_rhs(ctx, q_n, q_dot_n);

  StepDiagnostics diag;
  {
    Positions f = ctx.f_ext;
    diag.force_norm = free_norm(f, grid.fixed);
  }

  const std::vector<std::uint8_t> pinned = expand_pinned(grid.fixed);
  const VectorXd rest_flat = flat(grid.rest_positions);

  auto objective_at = [&](const Positions& x, std::vector<VoxelCache>& cache) {
    const double energy = evaluate_cache(ctx, x, cache);
    const Positions dq = x - state.q_hat;
    return 0.5 * inv_h2 * (dq.colwise().squaredNorm().transpose().cwiseProduct(grid.mass)).sum() + energy;
  };

  // Without anchors the elastic terms are translation invariant, so starting
  // from q^n shifted onto the inertial centre of mass costs nothing and keeps
  // every iterate, including shortened line-search steps, momentum exact.
  Positions q = q_n;
  if (!grid.any_fixed())
    q.colwise() += (state.q_hat - q_n) * grid.mass / grid.mass.sum();
  Positions Aq(3, n);
  double objective = objective_at(q, state.cache);
  std::vector<VoxelCache> trial_cache;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    if (!std::isfinite(objective)) throw solve_error("non-finite objective at outer iteration " + std::to_string(outer));
    diag.objective_history.push_back(objective);

    const LaggedSystem system(grid, ctx.kernel, ctx.omega(), h, state.cache);
    const Positions rhs = b_inertial + system.elastic_rhs(q);
    system.apply(q, Aq);
    Positions r = Aq - rhs;
    zero_fixed(r, grid.fixed);
    const double residual = free_norm(r, grid.fixed);
    if (!std::isfinite(residual)) throw solve_error("non-finite residual at outer iteration " + std::to_string(outer));
    diag.residual_history.push_back(residual);
    const auto& hist = diag.residual_history;
    if (hist.size() > 5 && hist[hist.size() - 6] > 0.0 && residual > 10.0 * hist[hist.size() - 6])
      throw solve_error("outer iterations diverging: residual grew from " +
                        std::to_string(hist[hist.size() - 6]) + " to " + std::to_string(residual) +
                        " over 5 iterations");

    Positions q_init = q;
    if (ctx.basis) q_init = subspace_warm_start(*ctx.basis, system.action(), rhs, q, grid.fixed).q;

    Positions q_new(3, n);
    if (opt.inner == InnerMethod::Jacobi) {
      VectorXd d(3 * n);
      for (int v = 0; v < n; ++v) d.segment<3>(3 * v).setConstant(system.diagonal()(v));
      Positions xin(3, n), xout(3, n);
      auto action = [&](const VectorXd& x, VectorXd& y) {
        flat(xin) = x;
        system.apply(xin, xout);
        y = flat(xout);
      };
      const JacobiResult jr = jacobi_solve(action, d, flat(rhs), flat(q_init), opt.tol_inner,
                                           opt.max_inner, &pinned, &rest_flat, floor);
      flat(q_new) = jr.x;
      diag.inner_per_outer.push_back(jr.iterations);
      diag.inner_iterations += jr.iterations;
      diag.contraction.push_back(jr.contraction);
      diag.inner_converged.push_back(jr.converged);
    } else {
      VectorXd x = flat(q_init);
      direct_solve_pinned(system.assemble(), flat(rhs), pinned, x);
      flat(q_new) = x;
      diag.inner_per_outer.push_back(1);
      diag.inner_iterations += 1;
      diag.contraction.push_back(0.0);
      diag.inner_converged.push_back(true);
    }

    system.apply(q_new, Aq);
    Positions r_new = Aq - rhs;
    zero_fixed(r_new, grid.fixed);
    diag.linear_residual = free_norm(r_new, grid.fixed);

    // With the exact force, q_new - q = -A^{-1} grad(objective) is a descent
    // direction for the SPD lagged matrix, but a full step overshoots when
    // the matrix underestimates the stiffness. Backtrack until the objective
    // does not rise beyond its round-off.
    const Positions dir = q_new - q;
    double trial_objective = objective_at(q_new, trial_cache);
    if (!opt.lagged_force) {
      const double noise = 1.0e-12 * std::abs(objective);
      double alpha = 1.0;
      for (int ls = 0; ls < kMaxBacktracks && !(trial_objective <= objective + noise); ++ls) {
        alpha *= 0.5;
        q_new = q + alpha * dir;
        trial_objective = objective_at(q_new, trial_cache);
      }
      diag.step_lengths.push_back(alpha);
    }

    // Convergence is judged on the full step so a short line-search step does
    // not pass for a converged one.
    const double change = dir.cwiseAbs().maxCoeff() / displacement_scale(q_new, grid.rest_positions, floor);
    if (!std::isfinite(change)) throw solve_error("non-finite positions at outer iteration " + std::to_string(outer));
    q = q_new;
    std::swap(state.cache, trial_cache);
    objective = trial_objective;
    diag.outer_iterations = outer + 1;
    if (change < opt.tol_outer) {
      diag.converged = true;
      break;
    }
  }

  state.q = q;
  state.q_dot = (q - q_n) / h;
  zero_fixed(state.q_dot, grid.fixed);
  state.diagnostics = std::move(diag);
}

Positions step_residual(const SolverContext& ctx, const Positions& q_n, const Positions& q_dot_n,
                        const Positions& q) {
  std::vector<VoxelCache> cache;
  evaluate_cache(ctx, q, cache);
  const LaggedSystem system(ctx.grid, ctx.kernel, ctx.omega(), ctx.h, cache);
  Positions Aq(3, q.cols());
  system.apply(q, Aq);
  Positions r = Aq - inertial_rhs(ctx, q_n, q_dot_n) - system.elastic_rhs(q);
  zero_fixed(r, ctx.grid.fixed);
  return r;
}

Vector3d linear_momentum(const SimGrid& grid, const Positions& q_dot) { return q_dot * grid.mass; }

} // namespace elastovox
