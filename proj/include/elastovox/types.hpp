#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace elastovox {

template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

using Vector3d = Eigen::Vector3d;
using Matrix3d = Eigen::Matrix3d;
using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

// Positions and per-vertex 3-vectors are stored column-wise: one column per
// active vertex, so a column-major 3xN block is the flat DoF vector
// [x0 y0 z0 x1 y1 z1 ...].
using Positions = Eigen::Matrix3Xd;

// One vec(F) (column-major 3x3) per occupied voxel.
using VoxelField = Eigen::Matrix<double, 9, Eigen::Dynamic>;

using Mat9x24 = Eigen::Matrix<double, 9, 24>;
using Mat24 = Eigen::Matrix<double, 24, 24>;
using Vec24 = Eigen::Matrix<double, 24, 1>;

/// Base for all errors raised by the library. `kind()` maps onto CLI exit codes.
class Error : public std::runtime_error {
public:
  enum class Kind { Parse, Fit, Solve, IO, Internal };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

inline Error parse_error(const std::string& what) { return Error(Error::Kind::Parse, what); }
inline Error fit_error(const std::string& what) { return Error(Error::Kind::Fit, what); }
inline Error solve_error(const std::string& what) { return Error(Error::Kind::Solve, what); }
inline Error io_error(const std::string& what) { return Error(Error::Kind::IO, what); }
inline Error internal_error(const std::string& what) { return Error(Error::Kind::Internal, what); }

inline Eigen::Map<VectorXd> flat(Positions& q) { return {q.data(), q.size()}; }
inline Eigen::Map<const VectorXd> flat(const Positions& q) { return {q.data(), q.size()}; }

} // namespace elastovox
