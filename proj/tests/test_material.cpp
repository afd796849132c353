#include <gtest/gtest.h>

#include <array>
#include <filesystem>

#include "elastovox/material.hpp"
#include "helpers.hpp"

using namespace elastovox;
using namespace elastovox::testing;

namespace {

constexpr std::array<MaterialModel, 3> kModels = {MaterialModel::Corotational,
                                                  MaterialModel::NeoHookean, MaterialModel::StVK};

Matrix3d near_identity(std::mt19937_64& rng, double amplitude = 0.3) {
  Matrix3d F = Matrix3d::Identity() + random_matrix(rng, amplitude);
  if (F.determinant() < 0.2) F = Matrix3d::Identity();
  return F;
}

// Newton iteration X <- (X + X^{-T}) / 2 converges to the polar rotation.
Matrix3d polar_by_iteration(Matrix3d X) {
  for (int it = 0; it < 100; ++it) X = 0.5 * (X + X.inverse().transpose());
  return X;
}

template <class Fn> Matrix3d numeric_gradient(const Fn& f, const Matrix3d& F, double eps = 1e-6) {
  Matrix3d g;
  for (int k = 0; k < 9; ++k) {
    Matrix3d a = F, b = F;
    a.data()[k] += eps;
    b.data()[k] -= eps;
    g.data()[k] = (f(a) - f(b)) / (2.0 * eps);
  }
  return g;
}

} // namespace

TEST(TargetEnergy, ZeroAtRest) {
  const Lame lame{1.3, 2.1};
  for (MaterialModel m : kModels) EXPECT_EQ(target_energy<double>(m, lame, Vector3d::Ones()), 0.0);
}

TEST(TargetEnergy, StvkUniaxialStretch) {
  // Green strain diag(1.5, 0, 0); Psi = mu |E|^2.
  EXPECT_NEAR(target_energy<double>(MaterialModel::StVK, {1.0, 0.0}, Vector3d(2, 1, 1)), 2.25, 1e-14);
  // With lambda the trace term adds lambda/2 * 1.5^2.
  EXPECT_NEAR(target_energy<double>(MaterialModel::StVK, {1.0, 2.0}, Vector3d(2, 1, 1)), 2.25 + 2.25, 1e-14);
}

TEST(TargetEnergy, CorotationalMuOnlyIsDistanceToRotation) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix3d F = near_identity(rng, 0.5);
    const SvdTriple<double> t = svd3<double>(F);
    const double expected = 0.7 * (F - t.U * t.V.transpose()).squaredNorm();
    EXPECT_NEAR(target_energy(MaterialModel::Corotational, {0.7, 0.0}, F), expected, 1e-12);
    EXPECT_NEAR(target_energy<double>(MaterialModel::Corotational, {0.7, 0.0}, t.S),
                0.7 * (t.S.array() - 1.0).square().sum(), 1e-12);
  }
}

TEST(TargetEnergy, NeoHookeanClosedForm) {
  const Lame lame{0.8, 1.7};
  const Vector3d S(1.3, 0.9, 0.7);
  const double J = S.prod();
  const double expected = 0.4 * (S.squaredNorm() - 3.0) - 0.8 * std::log(J) + 0.85 * std::log(J) * std::log(J);
  EXPECT_NEAR(target_energy<double>(MaterialModel::NeoHookean, lame, S), expected, 1e-14);
}

TEST(TargetEnergy, InvertedNeoHookeanStaysFinite) {
  const Lame lame{1.0, 1.0};
  EXPECT_TRUE(std::isfinite(target_energy<double>(MaterialModel::NeoHookean, lame, Vector3d(1.0, 1.0, -0.5))));
  EXPECT_TRUE(std::isfinite(target_energy<double>(MaterialModel::NeoHookean, lame, Vector3d(1.0, 1.0, 0.0))));
  Matrix3d F = Matrix3d::Identity();
  F(2, 2) = -0.3;
  EXPECT_TRUE(target_stress(MaterialModel::NeoHookean, lame, F).allFinite());
}

TEST(TargetEnergy, IsotropicUnderPermutation) {
  const Lame lame{1.1, 0.6};
  const Vector3d S(1.4, 0.8, 1.1);
  for (MaterialModel m : kModels) {
    const double e0 = target_energy<double>(m, lame, S);
    EXPECT_NEAR(target_energy<double>(m, lame, Vector3d(S(1), S(0), S(2))), e0, 1e-14);
    EXPECT_NEAR(target_energy<double>(m, lame, Vector3d(S(2), S(1), S(0))), e0, 1e-14);
    EXPECT_NEAR(target_energy<double>(m, lame, Vector3d(S(1), S(2), S(0))), e0, 1e-14);
  }
}

TEST(TargetStress, MatchesFiniteDifferences) {
  const Lame lame{1.2, 2.3};
  std::mt19937_64 rng(2);
  for (MaterialModel m : kModels)
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix3d F = near_identity(rng);
      const Matrix3d fd = numeric_gradient([&](const Matrix3d& X) { return target_energy(m, lame, X); }, F);
      const Matrix3d P = target_stress(m, lame, F);
      EXPECT_LT((P - fd).norm(), 1e-4 * std::max(1.0, fd.norm())) << to_string(m);
    }
}

TEST(TargetStress, DerivativeMatchesFiniteDifferences) {
  const Lame lame{1.2, 2.3};
  std::mt19937_64 rng(3);
  for (MaterialModel m : kModels)
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix3d F = near_identity(rng);
      const Eigen::Matrix<double, 9, 9> H = target_stress_derivative(m, lame, F);
      Eigen::Matrix<double, 9, 9> fd;
      for (int k = 0; k < 9; ++k) {
        Matrix3d a = F, b = F;
        a.data()[k] += 1e-6;
        b.data()[k] -= 1e-6;
        const Matrix3d d = (target_stress(m, lame, a) - target_stress(m, lame, b)) / 2e-6;
        fd.col(k) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(d.data());
      }
      EXPECT_LT((H - fd).norm(), 1e-4 * fd.norm()) << to_string(m);
    }
}

TEST(MaterialSpec, LameAndValidation) {
  const MaterialSpec m{MaterialModel::NeoHookean, 2.5e6, 0.32, 1000.0};
  EXPECT_NEAR(m.lame().mu, 2.5e6 / 2.64, 1e-6);
  EXPECT_NEAR(m.lame().lambda, 2.5e6 * 0.32 / (1.32 * 0.36), 1e-6);
  EXPECT_THROW((MaterialSpec{MaterialModel::StVK, -1.0, 0.3, 1000.0}.validate()), Error);
  EXPECT_THROW((MaterialSpec{MaterialModel::StVK, 1.0, 0.5, 1000.0}.validate()), Error);
  EXPECT_THROW((MaterialSpec{MaterialModel::StVK, 1.0, 0.3, 0.0}.validate()), Error);
  EXPECT_THROW(material_model_from_string("rubber"), Error);
  for (MaterialModel m : kModels) EXPECT_EQ(material_model_from_string(to_string(m)), m);
}

TEST(StrainNet, FreshNetIsHalfIdentity) {
  const StrainNet net = StrainNet::initialized(5);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const SvdTriple<double> t = svd3<double>(near_identity(rng, 0.5));
    EXPECT_LT((net.raw(t.S) - 0.5 * Matrix3d::Identity()).norm(), 1e-15);
    EXPECT_LT((neural_strain(net, t) - Matrix3d::Identity()).norm(), 1e-14);
  }
}

TEST(StrainNet, AntisymmetricOutputDropsOut) {
  // Every output row pair (a, b) / (b, a) carries opposite weights, so the
  // raw N is I/2 plus an antisymmetric part and N + N^T stays I.
  StrainNet net = random_net(6);
  for (int a = 0; a < 3; ++a) {
    net.w3().row(a + 3 * a).setZero();
    for (int b = a + 1; b < 3; ++b) net.w3().row(b + 3 * a) = -net.w3().row(a + 3 * b);
  }
  std::mt19937_64 rng(5);
  const SvdTriple<double> t = svd3<double>(near_identity(rng, 0.5));
  EXPECT_GT((net.raw(t.S) - 0.5 * Matrix3d::Identity()).norm(), 1e-3);
  EXPECT_LT((neural_strain(net, t) - Matrix3d::Identity()).norm(), 1e-14);
}

TEST(StrainNet, StrainIgnoresLeftRotation) {
  const StrainNet net = random_net(7);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix3d F = near_identity(rng, 0.4);
    const Matrix3d R = random_rotation_matrix(rng);
    const Matrix3d a = neural_strain(net, svd3<double>(F));
    const Matrix3d b = neural_strain(net, svd3<double>(Matrix3d(R * F)));
    EXPECT_LT((a - b).norm(), 1e-10);
  }
}

TEST(StrainNet, StrainIsExactlySymmetric) {
  const StrainNet net = random_net(8);
  std::mt19937_64 rng(7);
  const Matrix3d s = neural_strain(net, svd3<double>(near_identity(rng)));
  EXPECT_TRUE((s - s.transpose()).isZero(0.0));
}

TEST(StrainNet, FiniteOverStretchRange) {
  const StrainNet net = random_net(9, 1.0);
  for (double a = 0.05; a <= 4.0; a += 0.25)
    for (double b = 0.05; b <= a; b += 0.25)
      for (double c = 0.05; c <= b; c += 0.25) EXPECT_TRUE(net.raw(Vector3d(a, b, c)).allFinite());
}

TEST(StrainNet, InputJacobianMatchesFiniteDifferences) {
  const StrainNet net = random_net(10);
  const Vector3d S(1.3, 0.9, 0.8);
  const Eigen::Matrix<double, 9, 3> J = net.input_jacobian(S);
  for (int j = 0; j < 3; ++j) {
    Vector3d a = S, b = S;
    a(j) += 1e-6;
    b(j) -= 1e-6;
    const Matrix3d d = (net.raw(a) - net.raw(b)) / 2e-6;
    EXPECT_LT((J.col(j) - Eigen::Map<const Eigen::Matrix<double, 9, 1>>(d.data())).norm(), 1e-7);
  }
}

TEST(StrainNet, BackwardMatchesFiniteDifferences) {
  const StrainNet net = random_net(11);
  Eigen::Matrix3Xd S(3, 4);
  S << 1.2, 0.7, 1.0, 1.6, 1.1, 0.8, 0.9, 1.2, 0.9, 0.6, 0.95, 0.7;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  StrainNet::Batch9 dN(9, 4);
  for (Eigen::Index j = 0; j < dN.size(); ++j) dN.data()[j] = n(rng);
  const StrainNet::Params g = net.backward(S, dN);
  for (int p : {0, 100, StrainNet::kOffB1 + 3, StrainNet::kOffW2 + 77, StrainNet::kOffB2 + 5,
                StrainNet::kOffW3 + 40, StrainNet::kOffB3 + 2}) {
    StrainNet a = net, b = net;
    a.params()(p) += 1e-6;
    b.params()(p) -= 1e-6;
    const double fd = ((a.forward(S) - b.forward(S)).array() * dN.array()).sum() / 2e-6;
    EXPECT_NEAR(g(p), fd, 1e-6 * std::max(1.0, std::abs(fd))) << "param " << p;
  }
}

TEST(LocalEnergy, TraceAndProjectionFormsAgree) {
  const StrainNet net = random_net(12);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix3d F = near_identity(rng, 0.5);
    const double a = local_energy(net, 2.5, svd3<double>(F)).energy;
    const double b = local_energy_projection_form(net, 2.5, F);
    EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, std::abs(b)));
    EXPECT_GE(a, -1e-12);
  }
}

TEST(LocalEnergy, RotationInvariant) {
  const StrainNet net = random_net(13);
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix3d F = near_identity(rng, 0.5);
    const double e0 = local_energy(net, 1.0, svd3<double>(F)).energy;
    for (int r = 0; r < 5; ++r) {
      const Matrix3d R = random_rotation_matrix(rng);
      EXPECT_NEAR(local_energy(net, 1.0, svd3<double>(Matrix3d(R * F))).energy, e0, 1e-10 * std::max(1.0, e0));
    }
  }
}

TEST(LocalEnergy, ZeroAtRestForAnyNet) {
  for (std::uint64_t seed : {1u, 2u, 3u})
    EXPECT_LT(std::abs(local_energy(random_net(seed), 3.0, svd3<double>(Matrix3d::Identity())).energy), 1e-14);
}

TEST(LocalEnergy, LaggedGradientDifferentiatesFrozenForm) {
  const StrainNet net = random_net(14);
  std::mt19937_64 rng(11);
  const Matrix3d F = near_identity(rng);
  const SvdTriple<double> t = svd3<double>(F);
  const Matrix3d Nc = neural_strain(net, t);
  const Matrix3d P = neural_projection(t);
  const auto frozen = [&](const Matrix3d& X) { return 0.5 * 1.7 * (X * Nc - P).squaredNorm(); };
  const Matrix3d fd = numeric_gradient(frozen, F);
  EXPECT_LT((local_energy(net, 1.7, t).dE_dF - fd).norm(), 1e-6 * fd.norm());
}

TEST(LocalEnergy, CornerGradientUsesKernelTranspose) {
  const SimGrid g = rasterize(box_scene({1, 1, 1}));
  const DefGradKernel k = build_kernel(g);
  const StrainNet net = random_net(15);
  const Positions q = random_positions(g, 0.2, 3);
  const SvdTriple<double> t = svd3<double>(k.deformation_gradient(q, 0));
  const LocalEnergyEval e = local_energy(net, 1.0, t, k);
  const Matrix3d& D = e.dE_dF;
  const Vec24 expected = k.block(0).transpose() * Eigen::Map<const Eigen::Matrix<double, 9, 1>>(D.data());
  EXPECT_LT((e.gradient - expected).norm(), 1e-12 * expected.norm());
}

TEST(LocalEnergy, ExactStressMatchesFiniteDifferences) {
  const StrainNet net = random_net(16);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix3d F = near_identity(rng, 0.4);
    const auto energy = [&](const Matrix3d& X) { return local_energy(net, 1.3, svd3<double>(X)).energy; };
    const Matrix3d fd = numeric_gradient(energy, F);
    EXPECT_LT((neural_stress(net, 1.3, svd3<double>(F)) - fd).norm(), 1e-4 * std::max(1e-3, fd.norm()));
  }
}

TEST(Projection, IdentityRotationAndPolar) {
  EXPECT_LT((neural_projection(svd3<double>(Matrix3d::Identity())) - Matrix3d::Identity()).norm(), 1e-14);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix3d R = random_rotation_matrix(rng);
    EXPECT_LT((neural_projection(svd3<double>(R)) - R).norm(), 1e-12);
    const Matrix3d F = near_identity(rng, 0.6);
    const Matrix3d P = neural_projection(svd3<double>(F));
    EXPECT_NEAR(P.determinant(), 1.0, 1e-12);
    EXPECT_LT((P - polar_by_iteration(F)).norm(), 1e-10);
  }
}

TEST(StrainNetFile, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "elastovox_test.snet";
  const MaterialNet m{{MaterialModel::StVK, 3.0e5, 0.25, 1100.0}, random_net(17), 1.25e-4};
  write_strain_net(path, m);
  const MaterialNet r = read_strain_net(path);
  EXPECT_EQ(r.material.model, m.material.model);
  EXPECT_EQ(r.material.e, m.material.e);
  EXPECT_EQ(r.material.nu, m.material.nu);
  EXPECT_EQ(r.material.rho, m.material.rho);
  EXPECT_EQ(r.fit_loss, m.fit_loss);
  EXPECT_TRUE((r.net.params().array() == m.net.params().array()).all());
  std::filesystem::resize_file(path, 100);
  EXPECT_THROW(read_strain_net(path), Error);
  std::filesystem::remove(path);
}
