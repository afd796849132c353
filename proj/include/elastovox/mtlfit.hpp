#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "elastovox/material.hpp"

namespace elastovox {

struct FitConfig {
  int batch = 256;
  // Principal stretches are drawn uniformly from [lo, hi]^3.
  double lo = 0.4;
  double hi = 2.2;
  double step = 0.3;
  double decay = 0.99985; // step *= decay after every iteration
  int max_iters = 20000;
  double tol = 0.0;       // stop once the monitor loss drops to this value
  int monitor_every = 50;
  int monitor_samples = 1024;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StrainSample {
  Vector3d S;
  Matrix3d U;
  Matrix3d V;
  Matrix3d F() const { return U * S.asDiagonal() * V.transpose(); }
};

Matrix3d random_rotation(std::mt19937_64& rng);

/// Stretches uniform in [lo, hi]^3 sorted descending, frames uniform on SO(3).
std::vector<StrainSample> sample_strains(const FitConfig& cfg, std::mt19937_64& rng, int count);

/// Singular values of `samples` as 3xN columns.
Eigen::Matrix3Xd stretches(const std::vector<StrainSample>& samples);

/// Mean over columns of (log(Psi_net + 1) - log(Psi + 1))^2 at unit volume,
/// Psi_net = e/2 ||diag(S)(N + N^T) - I||^2. The rotation frames of a sample
/// drop out of both energies, so only S is needed.
double fit_loss(const StrainNet& net, const MaterialSpec& material, const Eigen::Matrix3Xd& S);

/// Loss plus its exact gradient with respect to the network parameters.
double fit_loss_gradient(const StrainNet& net, const MaterialSpec& material,
                         const Eigen::Matrix3Xd& S, StrainNet::Params& grad);

/// A fixed evaluation set independent of any training stream for `cfg.seed`.
Eigen::Matrix3Xd held_out_stretches(const FitConfig& cfg, int count);

struct FitResult {
  StrainNet net;
  double loss = std::numeric_limits<double>::infinity(); // monitor loss of `net`
  int iterations = 0;
  bool converged = false;
};

/// Plain gradient descent with geometric step decay on fresh batches. Returns
/// the best monitored parameters. Throws a fit error on a non-finite loss.
FitResult fit(const MaterialSpec& material, const FitConfig& cfg,
              const std::optional<StrainNet>& warm_start = std::nullopt);

struct BankNode {
  double e = 0.0;
  double nu = 0.0;
  double loss = 0.0;
  bool converged = false;
  StrainNet net;
};

struct WeightBank {
  MaterialModel model = MaterialModel::NeoHookean;
  double rho = 1000.0;
  int ne = 1;
  int nnu = 1;
  double e_lo = 0.0, e_hi = 0.0;
  double nu_lo = 0.0, nu_hi = 0.0;
  double sample_lo = 0.4, sample_hi = 2.2; // stretch range the nodes were fit on
  std::vector<BankNode> nodes;             // lattice order: ie + ne * inu

  double e_at(int ie) const { return ne == 1 ? e_lo : e_lo + (e_hi - e_lo) * ie / (ne - 1); }
  double nu_at(int inu) const { return nnu == 1 ? nu_lo : nu_lo + (nu_hi - nu_lo) * inu / (nnu - 1); }
  const BankNode& node(int ie, int inu) const { return nodes[ie + ne * inu]; }
};

/// Boustrophedon walk: rows of constant nu, alternating e direction, so
/// consecutive entries are lattice neighbours.
std::vector<int> traversal_order(int ne, int nnu);

struct BankConfig {
  FitConfig cold;        // first node
  FitConfig warm;        // every later node, warm started from its predecessor
  double loss_ceiling = std::numeric_limits<double>::infinity();
};

using BankProgress = std::function<void(int index, const BankNode&)>;

WeightBank build_bank(MaterialModel model, double rho, double e_lo, double e_hi, double nu_lo,
                      double nu_hi, int ne, int nnu, const BankConfig& cfg,
                      const BankProgress& progress = {});

/// Bilinear blend of the surrounding nodes followed by `fine_tune.max_iters`
/// descent steps. Throws a parse error outside the bank's ranges.
MaterialNet query(const WeightBank& bank, double e, double nu, const FitConfig& fine_tune);

// Binary format, little-endian:
//   char[4] "WBNK" | u32 version=1 | u32 model | u32 ne, nnu |
//   f64 e_lo, e_hi, nu_lo, nu_hi, rho, sample_lo, sample_hi |
//   u32 in, hidden1, hidden2, out | u32 param count |
//   ne*nnu records in lattice order: f64 e, nu, loss | u32 converged |
//   f64 params[count].
void write_bank(const std::filesystem::path& path, const WeightBank& bank);
WeightBank read_bank(const std::filesystem::path& path);

} // namespace elastovox
