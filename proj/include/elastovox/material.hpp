#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>

#include <Eigen/Core>

#include "elastovox/defgrad.hpp"
#include "elastovox/material_spec.hpp"
#include "elastovox/types.hpp"

namespace elastovox {

// ---------------------------------------------------------------------------
// Analytic hyperelastic energies
// ---------------------------------------------------------------------------

/// Below this J the Neo-Hookean log is continued by its second-order Taylor
/// expansion so inverted samples stay finite.
inline constexpr double kLogJFloor = 1.0e-6;

namespace detail {

template <typename Scalar> Scalar clamped_log(Scalar J) {
  const Scalar j0(kLogJFloor);
  if (J >= j0) return std::log(J);
  const Scalar d = J - j0;
  return std::log(j0) + d / j0 - d * d / (Scalar(2) * j0 * j0);
}

template <typename Scalar> Scalar clamped_log_d1(Scalar J) {
  const Scalar j0(kLogJFloor);
  if (J >= j0) return Scalar(1) / J;
  return Scalar(1) / j0 - (J - j0) / (j0 * j0);
}

template <typename Scalar> Scalar clamped_log_d2(Scalar J) {
  const Scalar j0(kLogJFloor);
  if (J >= j0) return Scalar(-1) / (J * J);
  return Scalar(-1) / (j0 * j0);
}

} // namespace detail

/// Energy density of an isotropic model as a function of the (signed)
/// singular values of F.
template <typename Scalar>
Scalar target_energy(MaterialModel model, const Lame& lame, const Vec3<Scalar>& S) {
  const Scalar mu(lame.mu);
  const Scalar lambda(lame.lambda);
  switch (model) {
  case MaterialModel::Corotational: {
    const Vec3<Scalar> d = S.array() - Scalar(1);
    const Scalar tr = d.sum();
    return mu * d.squaredNorm() + Scalar(0.5) * lambda * tr * tr;
  }
  case MaterialModel::NeoHookean: {
    const Scalar logJ = detail::clamped_log(S.prod());
    return Scalar(0.5) * mu * (S.squaredNorm() - Scalar(3)) - mu * logJ +
           Scalar(0.5) * lambda * logJ * logJ;
  }
  case MaterialModel::StVK: {
    const Vec3<Scalar> E = Scalar(0.5) * (S.array().square() - Scalar(1));
    const Scalar tr = E.sum();
    return mu * E.squaredNorm() + Scalar(0.5) * lambda * tr * tr;
  }
  }
  return Scalar(0);
}

/// Energy density evaluated on a full F.
double target_energy(MaterialModel model, const Lame& lame, const Matrix3d& F);

/// First Piola-Kirchhoff stress dPsi/dF.
Matrix3d target_stress(MaterialModel model, const Lame& lame, const Matrix3d& F);

/// d vec(P) / d vec(F), 9x9, column-major vec convention.
Eigen::Matrix<double, 9, 9> target_stress_derivative(MaterialModel model, const Lame& lame,
                                                     const Matrix3d& F);

// ---------------------------------------------------------------------------
// Strain correction network
// ---------------------------------------------------------------------------

/// Fixed-architecture MLP 3 -> 64 -> 64 -> 9 with tanh hidden units.
///
/// Input is S - 1 (principal stretches relative to rest). The raw material
/// frame strain is
///   N(S) = I/2 + mlp(S - 1) - mlp(0),
/// so N(1,1,1) = I/2 for every parameter vector: the symmetrized strain is the
/// identity and rest carries no energy or force. The output bias cancels and
/// is kept only so the parameter layout matches the plain MLP.
template <typename Scalar> class StrainNetT {
public:
  static constexpr int kIn = 3;
  static constexpr int kHidden1 = 64;
  static constexpr int kHidden2 = 64;
  static constexpr int kOut = 9;
  static constexpr int kNumParams =
      kHidden1 * kIn + kHidden1 + kHidden2 * kHidden1 + kHidden2 + kOut * kHidden2 + kOut;

  using Params = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Batch3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;
  using Batch9 = Eigen::Matrix<Scalar, 9, Eigen::Dynamic>;
  using Hidden = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  StrainNetT() : params_(Params::Zero(kNumParams)) {}
  explicit StrainNetT(Params params) : params_(std::move(params)) {
    if (params_.size() != kNumParams) throw internal_error("strain net parameter count mismatch");
  }

  /// Xavier-style normal init for hidden layers, zero output layer: the fresh
  /// net reproduces N = I/2 exactly.
  static StrainNetT initialized(std::uint64_t seed) {
    StrainNetT net;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](auto&& block, double stddev) {
      for (Eigen::Index c = 0; c < block.cols(); ++c)
        for (Eigen::Index r = 0; r < block.rows(); ++r) block(r, c) = Scalar(stddev * normal(rng));
    };
    fill(net.w1(), std::sqrt(1.0 / kIn));
    fill(net.w2(), std::sqrt(1.0 / kHidden1));
    return net;
  }

  const Params& params() const { return params_; }
  Params& params() { return params_; }

  /// Raw 3x3 output N for one set of singular values.
  Mat3<Scalar> raw(const Vec3<Scalar>& S) const {
    const Batch9 y = forward(Batch3(S));
    return Eigen::Map<const Mat3<Scalar>>(y.data());
  }

  /// Symmetric material-frame strain N + N^T.
  Mat3<Scalar> symmetric_strain(const Vec3<Scalar>& S) const {
    const Mat3<Scalar> N = raw(S);
    return N + N.transpose();
  }

  /// d vec(N) / dS at one input (9x3); the rest anchor does not depend on S.
  Eigen::Matrix<Scalar, 9, 3> input_jacobian(const Vec3<Scalar>& S) const {
    const Vec3<Scalar> x = S.array() - Scalar(1);
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h1 = (w1() * x + b1()).array().tanh();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h2 = (w2() * h1 + b2()).array().tanh();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 3> J1 =
        (Scalar(1) - h1.array().square()).matrix().asDiagonal() * w1();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 3> J2 =
        (Scalar(1) - h2.array().square()).matrix().asDiagonal() * (w2() * J1);
    return w3() * J2;
  }

  /// Raw outputs for a batch of singular-value columns.
  Batch9 forward(const Batch3& S) const {
    const Batch3 x = S.array() - Scalar(1);
    Hidden h1 = (w1() * x).colwise() + b1();
    h1 = h1.array().tanh();
    Hidden h2 = (w2() * h1).colwise() + b2();
    h2 = h2.array().tanh();
    Batch9 y = w3() * (h2.colwise() - anchor_h2());
    y.colwise() += half_identity();
    return y;
  }

  /// Gradient of sum_b <dN_b, N_b(S_b)> w.r.t. the parameters, where dN holds
  /// dLoss/dN per sample (vec, column-major).
  Params backward(const Batch3& S, const Batch9& dN) const {
    const Batch3 x = S.array() - Scalar(1);
    Hidden h1 = (w1() * x).colwise() + b1();
    h1 = h1.array().tanh();
    Hidden h2 = (w2() * h1).colwise() + b2();
    h2 = h2.array().tanh();

    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h1_0 = b1().array().tanh();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h2_0 = (w2() * h1_0 + b2()).array().tanh();
    const Eigen::Matrix<Scalar, 9, 1> g0 = -dN.rowwise().sum();

    Params grad = Params::Zero(kNumParams);
    MapMat gw1(grad.data() + kOffW1, kHidden1, kIn);
    MapVec gb1(grad.data() + kOffB1, kHidden1);
    MapMat gw2(grad.data() + kOffW2, kHidden2, kHidden1);
    MapVec gb2(grad.data() + kOffB2, kHidden2);
    MapMat gw3(grad.data() + kOffW3, kOut, kHidden2);

    gw3.noalias() = dN * h2.transpose() + g0 * h2_0.transpose();

    Hidden dz2 = (w3().transpose() * dN).array() * (Scalar(1) - h2.array().square());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dz2_0 =
        (w3().transpose() * g0).array() * (Scalar(1) - h2_0.array().square());
    gw2.noalias() = dz2 * h1.transpose() + dz2_0 * h1_0.transpose();
    gb2 = dz2.rowwise().sum() + dz2_0;

    Hidden dz1 = (w2().transpose() * dz2).array() * (Scalar(1) - h1.array().square());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dz1_0 =
        (w2().transpose() * dz2_0).array() * (Scalar(1) - h1_0.array().square());
    gw1.noalias() = dz1 * x.transpose();
    gb1 = dz1.rowwise().sum() + dz1_0;
    return grad;
  }

  // Parameter blocks, row-major weights laid out as W1, b1, W2, b2, W3, b3.
  using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapMat = Eigen::Map<RowMat>;
  using MapConstMat = Eigen::Map<const RowMat>;
  using MapVec = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
  using MapConstVec = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

  static constexpr int kOffW1 = 0;
  static constexpr int kOffB1 = kOffW1 + kHidden1 * kIn;
  static constexpr int kOffW2 = kOffB1 + kHidden1;
  static constexpr int kOffB2 = kOffW2 + kHidden2 * kHidden1;
  static constexpr int kOffW3 = kOffB2 + kHidden2;
  static constexpr int kOffB3 = kOffW3 + kOut * kHidden2;

  MapMat w1() { return {params_.data() + kOffW1, kHidden1, kIn}; }
  MapVec b1() { return {params_.data() + kOffB1, kHidden1}; }
  MapMat w2() { return {params_.data() + kOffW2, kHidden2, kHidden1}; }
  MapVec b2() { return {params_.data() + kOffB2, kHidden2}; }
  MapMat w3() { return {params_.data() + kOffW3, kOut, kHidden2}; }
  MapVec b3() { return {params_.data() + kOffB3, kOut}; }
  MapConstMat w1() const { return {params_.data() + kOffW1, kHidden1, kIn}; }
  MapConstVec b1() const { return {params_.data() + kOffB1, kHidden1}; }
  MapConstMat w2() const { return {params_.data() + kOffW2, kHidden2, kHidden1}; }
  MapConstVec b2() const { return {params_.data() + kOffB2, kHidden2}; }
  MapConstMat w3() const { return {params_.data() + kOffW3, kOut, kHidden2}; }
  MapConstVec b3() const { return {params_.data() + kOffB3, kOut}; }

private:
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> anchor_h2() const {
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h1_0 = b1().array().tanh();
    return (w2() * h1_0 + b2()).array().tanh();
  }

  static Eigen::Matrix<Scalar, 9, 1> half_identity() {
    Eigen::Matrix<Scalar, 9, 1> v = Eigen::Matrix<Scalar, 9, 1>::Zero();
    v(0) = v(4) = v(8) = Scalar(0.5);
    return v;
  }

  Params params_;
};

using StrainNet = StrainNetT<double>;

/// A fitted network together with the material it was fit for.
struct MaterialNet {
  MaterialSpec material;
  StrainNet net;
  double fit_loss = 0.0;
};

/// V (N + N^T) V^T for the raw output N at the triple's singular values.
Matrix3d neural_strain(const StrainNet& net, const SvdTriple<double>& triple);

/// P = U V^T.
inline Matrix3d neural_projection(const SvdTriple<double>& triple) {
  return triple.U * triple.V.transpose();
}

struct LocalEnergyEval {
  double energy = 0.0;
  Matrix3d Q = Matrix3d::Zero(); // diag(S) (N + N^T)
  // dE/dF with the strain and projection held at their current values:
  // omega (F Nc - P) Nc, Nc the world-frame neural strain.
  Matrix3d dE_dF = Matrix3d::Zero();
  Vec24 gradient = Vec24::Zero(); // dE/d(corner positions) when a kernel is supplied
};

/// Corrected local energy E = omega/2 tr(Q Q^T) + 3 omega/2 - omega tr(Q).
LocalEnergyEval local_energy(const StrainNet& net, double omega, const SvdTriple<double>& triple);
LocalEnergyEval local_energy(const StrainNet& net, double omega, const SvdTriple<double>& triple,
                             const DefGradKernel& kernel);

/// Exact dE/dF of the corrected local energy, differentiating through the
/// singular values and the network: U diag(dE/dS) V^T. Valid away from
/// repeated singular values.
Matrix3d neural_stress(const StrainNet& net, double omega, const SvdTriple<double>& triple);

/// Same energy through the projection route: omega/2 ||F Nc - U V^T||_F^2.
double local_energy_projection_form(const StrainNet& net, double omega, const Matrix3d& F);

/// Energy density of the network at unit volume: e/2 ||diag(S)(N + N^T) - I||^2.
template <typename Scalar>
Scalar neural_energy_density(const StrainNetT<Scalar>& net, Scalar e, const Vec3<Scalar>& S) {
  const Mat3<Scalar> Q = S.asDiagonal() * net.symmetric_strain(S);
  return Scalar(0.5) * e * (Q - Mat3<Scalar>::Identity()).squaredNorm();
}

// Binary format, little-endian:
//   char[4] "SNET" | u32 version=1 | u32 in, hidden1, hidden2, out |
//   u32 material model | f64 e, nu, rho, fit_loss | u32 param count |
//   f64 params[count] in the order W1 (row-major), b1, W2, b2, W3, b3.
void write_strain_net(const std::filesystem::path& path, const MaterialNet& mnet);
MaterialNet read_strain_net(const std::filesystem::path& path);

} // namespace elastovox
