#include "elastovox/material.hpp"

#include <fstream>

#include "binary_io.hpp"

namespace elastovox {

std::string_view to_string(MaterialModel model) {
  switch (model) {
  case MaterialModel::Corotational: return "corotational";
  case MaterialModel::NeoHookean: return "neohookean";
  case MaterialModel::StVK: return "stvk";
  }
  return "unknown";
}

MaterialModel material_model_from_string(std::string_view name) {
  if (name == "corotational" || name == "cr") return MaterialModel::Corotational;
  if (name == "neohookean" || name == "nh") return MaterialModel::NeoHookean;
  if (name == "stvk") return MaterialModel::StVK;
  throw parse_error("unknown material model '" + std::string(name) + "'");
}

void MaterialSpec::validate() const {
  if (!(e > 0.0)) throw parse_error("Young's modulus must be positive");
  if (!(nu >= 0.0 && nu < 0.5)) throw parse_error("Poisson's ratio must lie in [0, 0.5)");
  if (!(rho > 0.0)) throw parse_error("density must be positive");
}

namespace {

Matrix3d cofactor(const Matrix3d& F) {
  Matrix3d C;
  C.col(0) = F.col(1).cross(F.col(2));
  C.col(1) = F.col(2).cross(F.col(0));
  C.col(2) = F.col(0).cross(F.col(1));
  return C;
}

Matrix3d cofactor_derivative(const Matrix3d& F, const Matrix3d& dF) {
  Matrix3d dC;
  dC.col(0) = dF.col(1).cross(F.col(2)) + F.col(1).cross(dF.col(2));
  dC.col(1) = dF.col(2).cross(F.col(0)) + F.col(2).cross(dF.col(0));
  dC.col(2) = dF.col(0).cross(F.col(1)) + F.col(0).cross(dF.col(1));
  return dC;
}

// Directional derivative of the first Piola stress along dF.
Matrix3d stress_differential(MaterialModel model, const Lame& lame, const Matrix3d& F,
                             const Matrix3d& dF, const SvdTriple<double>& svd) {
  const double mu = lame.mu;
  const double lambda = lame.lambda;
  switch (model) {
  case MaterialModel::Corotational: {
    const Matrix3d R = svd.U * svd.V.transpose();
    const Matrix3d M = svd.U.transpose() * dF * svd.V;
    Matrix3d omega = Matrix3d::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (i == j) continue;
        double denom = svd.S(i) + svd.S(j);
        if (std::abs(denom) < 1.0e-12) denom = denom < 0.0 ? -1.0e-12 : 1.0e-12;
        omega(i, j) = (M(i, j) - M(j, i)) / denom;
      }
    const Matrix3d dR = svd.U * omega * svd.V.transpose();
    const double trace_s = svd.S.sum();
    return 2.0 * mu * (dF - dR) + lambda * (R.transpose() * dF).trace() * R +
           lambda * (trace_s - 3.0) * dR;
  }
  case MaterialModel::NeoHookean: {
    const double J = F.determinant();
    const double phi = detail::clamped_log(J);
    const double d1 = detail::clamped_log_d1(J);
    const double d2 = detail::clamped_log_d2(J);
    const Matrix3d C = cofactor(F);
    const double c = (lambda * phi - mu) * d1;
    const double dc = lambda * d1 * d1 + (lambda * phi - mu) * d2;
    return mu * dF + dc * C.cwiseProduct(dF).sum() * C + c * cofactor_derivative(F, dF);
  }
  case MaterialModel::StVK: {
    const Matrix3d E = 0.5 * (F.transpose() * F - Matrix3d::Identity());
    const Matrix3d dE = 0.5 * (dF.transpose() * F + F.transpose() * dF);
    const Matrix3d S2 = 2.0 * mu * E + lambda * E.trace() * Matrix3d::Identity();
    const Matrix3d dS2 = 2.0 * mu * dE + lambda * dE.trace() * Matrix3d::Identity();
    return dF * S2 + F * dS2;
  }
  }
  return Matrix3d::Zero();
}

} // namespace

double target_energy(MaterialModel model, const Lame& lame, const Matrix3d& F) {
  return target_energy<double>(model, lame, svd3<double>(F).S);
}

Matrix3d target_stress(MaterialModel model, const Lame& lame, const Matrix3d& F) {
  const double mu = lame.mu;
  const double lambda = lame.lambda;
  switch (model) {
  case MaterialModel::Corotational: {
    const auto svd = svd3<double>(F);
    const Matrix3d R = svd.U * svd.V.transpose();
    return 2.0 * mu * (F - R) + lambda * (svd.S.sum() - 3.0) * R;
  }
  case MaterialModel::NeoHookean: {
    const double J = F.determinant();
    const double phi = detail::clamped_log(J);
    return mu * F + (lambda * phi - mu) * detail::clamped_log_d1(J) * cofactor(F);
  }
  case MaterialModel::StVK: {
    const Matrix3d E = 0.5 * (F.transpose() * F - Matrix3d::Identity());
    return F * (2.0 * mu * E + lambda * E.trace() * Matrix3d::Identity());
  }
  }
  return Matrix3d::Zero();
}

Eigen::Matrix<double, 9, 9> target_stress_derivative(MaterialModel model, const Lame& lame,
                                                     const Matrix3d& F) {
  const auto svd = svd3<double>(F);
  Eigen::Matrix<double, 9, 9> H;
  for (int k = 0; k < 9; ++k) {
    Matrix3d dF = Matrix3d::Zero();
    dF.data()[k] = 1.0;
    const Matrix3d dP = stress_differential(model, lame, F, dF, svd);
    H.col(k) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(dP.data());
  }
  return 0.5 * (H + H.transpose());
}

Matrix3d neural_strain(const StrainNet& net, const SvdTriple<double>& triple) {
  const Matrix3d m = triple.V * net.symmetric_strain(triple.S) * triple.V.transpose();
  return 0.5 * (m + m.transpose());
}

LocalEnergyEval local_energy(const StrainNet& net, double omega, const SvdTriple<double>& triple) {
  LocalEnergyEval out;
  const Matrix3d sym = net.symmetric_strain(triple.S);
  out.Q = triple.S.asDiagonal() * sym;
  out.energy = 0.5 * omega * (out.Q * out.Q.transpose()).trace() + 1.5 * omega - omega * out.Q.trace();

  // F Nc - P = U (Q - I) V^T, and Nc = V sym V^T.
  out.dE_dF = omega * triple.U * (out.Q - Matrix3d::Identity()) * sym * triple.V.transpose();
  return out;
}

LocalEnergyEval local_energy(const StrainNet& net, double omega, const SvdTriple<double>& triple,
                             const DefGradKernel& kernel) {
  LocalEnergyEval out = local_energy(net, omega, triple);
  const auto& w = kernel.corner_weights();
  for (int c = 0; c < 8; ++c) out.gradient.segment<3>(3 * c) = out.dE_dF * w[c];
  return out;
}

Matrix3d neural_stress(const StrainNet& net, double omega, const SvdTriple<double>& triple) {
  const Vector3d& S = triple.S;
  const Matrix3d sym = net.symmetric_strain(S);
  const Matrix3d R = S.asDiagonal() * sym - Matrix3d::Identity();
  const Eigen::Matrix<double, 9, 3> J = net.input_jacobian(S);
  Vector3d dS;
  for (int j = 0; j < 3; ++j) {
    const Eigen::Map<const Matrix3d> dN(J.col(j).data());
    Matrix3d dQ = S.asDiagonal() * (dN + dN.transpose());
    dQ.row(j) += sym.row(j);
    dS(j) = omega * (R.array() * dQ.array()).sum();
  }
  return triple.U * dS.asDiagonal() * triple.V.transpose();
}

double local_energy_projection_form(const StrainNet& net, double omega, const Matrix3d& F) {
  const auto triple = svd3<double>(F);
  const Matrix3d Nc = neural_strain(net, triple);
  return 0.5 * omega * (F * Nc - neural_projection(triple)).squaredNorm();
}

void write_strain_net(const std::filesystem::path& path, const MaterialNet& mnet) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write strain net file " + path.string());
  using detail::write_pod;
  detail::write_magic(out, "SNET");
  write_pod<std::uint32_t>(out, 1);
  write_pod<std::uint32_t>(out, StrainNet::kIn);
  write_pod<std::uint32_t>(out, StrainNet::kHidden1);
  write_pod<std::uint32_t>(out, StrainNet::kHidden2);
  write_pod<std::uint32_t>(out, StrainNet::kOut);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(mnet.material.model));
  write_pod<double>(out, mnet.material.e);
  write_pod<double>(out, mnet.material.nu);
  write_pod<double>(out, mnet.material.rho);
  write_pod<double>(out, mnet.fit_loss);
  write_pod<std::uint32_t>(out, StrainNet::kNumParams);
  out.write(reinterpret_cast<const char*>(mnet.net.params().data()),
            static_cast<std::streamsize>(sizeof(double) * StrainNet::kNumParams));
  if (!out) throw io_error("failed writing " + path.string());
}

MaterialNet read_strain_net(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open strain net file " + path.string());
  using detail::read_pod;
  const std::string what = "strain net " + path.string();
  detail::expect_magic(in, "SNET", what);
  if (read_pod<std::uint32_t>(in, what) != 1) throw parse_error(what + ": unsupported version");
  const auto in_dim = read_pod<std::uint32_t>(in, what);
  const auto h1 = read_pod<std::uint32_t>(in, what);
  const auto h2 = read_pod<std::uint32_t>(in, what);
  const auto out_dim = read_pod<std::uint32_t>(in, what);
  if (in_dim != StrainNet::kIn || h1 != StrainNet::kHidden1 || h2 != StrainNet::kHidden2 ||
      out_dim != StrainNet::kOut)
    throw parse_error(what + ": architecture mismatch");
  MaterialNet mnet;
  const auto model = read_pod<std::uint32_t>(in, what);
  if (model > 2) throw parse_error(what + ": unknown material tag");
  mnet.material.model = static_cast<MaterialModel>(model);
  mnet.material.e = read_pod<double>(in, what);
  mnet.material.nu = read_pod<double>(in, what);
  mnet.material.rho = read_pod<double>(in, what);
  mnet.fit_loss = read_pod<double>(in, what);
  if (read_pod<std::uint32_t>(in, what) != StrainNet::kNumParams)
    throw parse_error(what + ": parameter count mismatch");
  StrainNet::Params p(StrainNet::kNumParams);
  in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(sizeof(double) * p.size()));
  if (!in) throw parse_error("truncated " + what);
  mnet.net = StrainNet(std::move(p));
  return mnet;
}

} // namespace elastovox
