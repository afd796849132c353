#pragma once

#include <array>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "elastovox/grid.hpp"
#include "elastovox/types.hpp"

namespace elastovox {

/// Linear map from the 8 corner positions of a voxel to vec(F).
///
/// F is the least-squares linear fit of the deformed corner offsets against
/// the rest corner offsets, both taken about their centroids:
///   F = sum_c x_c w_c^T,  w_c = (Abar Abar^T)^{-1} abar_c,
/// where abar_c are centroid-relative rest corners. sum_c w_c = 0, so F is
/// translation invariant. On a uniform grid every voxel shares the same
/// weights; the incidence table maps voxel corners to active vertices.
///
/// A single linear fit per voxel leaves 12 non-affine corner modes with no
/// energy (hourglass modes). The kernel also carries a penalty on them,
///   E_hg = omega/2 tr(X K X^T),  K = hourglass / spacing^2 (I - Pi),
/// X the 3x8 corner positions and Pi the projector onto affine corner maps.
/// E_hg vanishes for every affine map (so for rigid motions too) and is
/// rotation invariant.
class DefGradKernel {
public:
  using Mat8 = Eigen::Matrix<double, 8, 8>;

  DefGradKernel() = default;

  const std::array<Vector3d, 8>& corner_weights() const { return weights_; }
  const std::vector<std::array<int, 8>>& incidence() const { return corners_; }
  int num_voxels() const { return static_cast<int>(corners_.size()); }
  int num_vertices() const { return num_vertices_; }

  /// The dense 9x24 operator of one voxel, acting on [x_c0; x_c1; ...; x_c7].
  Mat9x24 block(int voxel) const;

  /// F of a single voxel.
  Matrix3d deformation_gradient(const Positions& q, int voxel) const {
    Matrix3d F = Matrix3d::Zero();
    const auto& corners = corners_[voxel];
    for (int c = 0; c < 8; ++c) F.noalias() += q.col(corners[c]) * weights_[c].transpose();
    return F;
  }

  /// Adds (G^T vec(Y)) for one voxel into `out`.
  void scatter(const Matrix3d& Y, int voxel, Positions& out) const {
    const auto& corners = corners_[voxel];
    for (int c = 0; c < 8; ++c) out.col(corners[c]).noalias() += Y * weights_[c];
  }

  double hourglass() const { return hourglass_; }
  /// hourglass / spacing^2 (I - Pi); multiply by omega for a stiffness.
  const Mat8& hourglass_matrix() const { return hg_; }

  /// tr(X K X^T) / 2 of one voxel (multiply by omega for an energy).
  double hourglass_energy(const Positions& q, int voxel) const {
    if (hourglass_ == 0.0) return 0.0;
    // (I - Pi) is a projector, so the energy is a sum of squares of the
    // non-affine residual. This avoids cancellation on absolute positions.
    return 0.5 * hg_scale_ * (gather(q, voxel) * nonaffine_).squaredNorm();
  }

  /// Adds scale * X K to the corners of one voxel.
  void add_hourglass_force(const Positions& q, int voxel, double scale, Positions& out) const {
    if (hourglass_ == 0.0) return;
    const Eigen::Matrix<double, 3, 8> Y = (scale * hg_scale_) * (gather(q, voxel) * nonaffine_);
    const auto& corners = corners_[voxel];
    for (int c = 0; c < 8; ++c) out.col(corners[c]) += Y.col(c);
  }

  /// Corner positions of one voxel, relative to its first corner.
  Eigen::Matrix<double, 3, 8> gather(const Positions& q, int voxel) const {
    Eigen::Matrix<double, 3, 8> X;
    const auto& corners = corners_[voxel];
    for (int c = 0; c < 8; ++c) X.col(c) = q.col(corners[c]) - q.col(corners[0]);
    return X;
  }

  friend DefGradKernel build_kernel(const SimGrid& grid, double hourglass);

private:
  std::array<Vector3d, 8> weights_{};
  double hourglass_ = 0.0;
  double hg_scale_ = 0.0;
  Mat8 nonaffine_ = Mat8::Zero();
  Mat8 hg_ = Mat8::Zero();
  std::vector<std::array<int, 8>> corners_;
  int num_vertices_ = 0;
};

/// Default hourglass penalty, as a fraction of the Young's modulus.
inline constexpr double kDefaultHourglass = 0.2;

DefGradKernel build_kernel(const SimGrid& grid, double hourglass = kDefaultHourglass);

/// vec(F) per occupied voxel (column-major 3x3 in each column of the result).
VoxelField apply(const DefGradKernel& kernel, const Positions& q);

/// Scatter-add of G_i^T y_i over all voxels.
Positions apply_transpose(const DefGradKernel& kernel, const VoxelField& y);

template <typename Scalar> struct SvdTriple {
  Mat3<Scalar> U;
  Vec3<Scalar> S;
  Mat3<Scalar> V;

  Mat3<Scalar> reconstruct() const { return U * S.asDiagonal() * V.transpose(); }
};

/// Rotation-variant SVD: U, V proper rotations, singular values descending,
/// and an inverted F carries its reflection in a negative S(2).
template <typename Scalar> SvdTriple<Scalar> svd3(const Mat3<Scalar>& F) {
  Eigen::JacobiSVD<Mat3<Scalar>> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SvdTriple<Scalar> out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  if (out.U.determinant() < Scalar(0)) {
    out.U.col(2) *= Scalar(-1);
    out.S(2) *= Scalar(-1);
  }
  if (out.V.determinant() < Scalar(0)) {
    out.V.col(2) *= Scalar(-1);
    out.S(2) *= Scalar(-1);
  }
  // Fix the remaining column-pair sign freedom so that V, and with it anything
  // expressed in the material frame, is a function of F^T F alone.
  for (int i = 0; i < 2; ++i) {
    Eigen::Index k;
    out.V.col(i).cwiseAbs().maxCoeff(&k);
    if (out.V(k, i) < Scalar(0)) {
      out.U.col(i) *= Scalar(-1);
      out.V.col(i) *= Scalar(-1);
      out.U.col(2) *= Scalar(-1);
      out.V.col(2) *= Scalar(-1);
    }
  }
  return out;
}

} // namespace elastovox
