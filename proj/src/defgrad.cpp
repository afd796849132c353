#include "elastovox/defgrad.hpp"

#include <Eigen/Cholesky>

namespace elastovox {

DefGradKernel build_kernel(const SimGrid& grid, double hourglass) {
  if (!(hourglass >= 0.0)) throw parse_error("hourglass penalty must be non-negative");
  DefGradKernel kernel;

  // Every voxel is the same axis-aligned cube, so one set of weights serves all.
  Eigen::Matrix<double, 3, 8> rest;
  for (int c = 0; c < 8; ++c) rest.col(c) = grid.spacing * SimGrid::corner_offset(c).cast<double>();
  const Vector3d centroid = rest.rowwise().mean();
  rest.colwise() -= centroid;

  const Matrix3d gram = rest * rest.transpose();
  Eigen::LDLT<Matrix3d> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
    throw internal_error("singular rest-shape covariance in deformation gradient kernel");
  const Eigen::Matrix<double, 3, 8> w = ldlt.solve(rest);
  for (int c = 0; c < 8; ++c) kernel.weights_[c] = w.col(c);

  const DefGradKernel::Mat8 affine =
      DefGradKernel::Mat8::Constant(1.0 / 8.0) + rest.transpose() * w;
  kernel.hourglass_ = hourglass;
  kernel.hg_scale_ = hourglass / (grid.spacing * grid.spacing);
  kernel.nonaffine_ = DefGradKernel::Mat8::Identity() - affine;
  kernel.hg_ = kernel.hg_scale_ * kernel.nonaffine_;

  kernel.corners_ = grid.voxel_corners;
  kernel.num_vertices_ = grid.num_vertices();
  return kernel;
}

Mat9x24 DefGradKernel::block(int /*voxel*/) const {
  Mat9x24 G = Mat9x24::Zero();
  // vec(F)(a + 3b) = sum_c x_c(a) w_c(b)
  for (int c = 0; c < 8; ++c)
    for (int b = 0; b < 3; ++b)
      for (int a = 0; a < 3; ++a) G(a + 3 * b, 3 * c + a) = weights_[c](b);
  return G;
}

VoxelField apply(const DefGradKernel& kernel, const Positions& q) {
  VoxelField out(9, kernel.num_voxels());
  for (int i = 0; i < kernel.num_voxels(); ++i) {
    const Matrix3d F = kernel.deformation_gradient(q, i);
    out.col(i) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(F.data());
  }
  return out;
}

Positions apply_transpose(const DefGradKernel& kernel, const VoxelField& y) {
  Positions out = Positions::Zero(3, kernel.num_vertices());
  for (int i = 0; i < kernel.num_voxels(); ++i) {
    const Eigen::Map<const Matrix3d> Y(y.col(i).data());
    kernel.scatter(Y, i, out);
  }
  return out;
}

} // namespace elastovox
