#pragma once

#include <random>

#include "elastovox/grid.hpp"
#include "elastovox/material.hpp"

namespace elastovox::testing {

inline SceneSpec box_scene(const Eigen::Vector3i& res, double spacing = 0.1, double rho = 1000.0) {
  SceneSpec s;
  s.shape = BoxShape{Vector3d::Zero(), spacing * res.cast<double>()};
  s.resolution = res;
  s.spacing = spacing;
  s.origin = Vector3d::Zero();
  s.material.rho = rho;
  return s;
}

/// 16x3x3 beam of spacing 0.1, clamped at x = 0, under gravity.
inline SceneSpec cantilever_scene(MaterialModel model, double e, double nu) {
  SceneSpec s = box_scene({16, 3, 3});
  s.material = {model, e, nu, 1000.0};
  s.fixed_regions.push_back({Vector3d::Constant(-1.0), Vector3d(1.0e-6, 1.0, 1.0)});
  s.gravity = {0.0, 0.0, -9.8};
  s.dt = 1.0e-3;
  return s;
}

inline Positions random_positions(const SimGrid& grid, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Positions q = grid.rest_positions;
  for (Eigen::Index j = 0; j < q.size(); ++j) q.data()[j] += amplitude * grid.spacing * u(rng);
  return q;
}

inline Matrix3d random_matrix(std::mt19937_64& rng, double amplitude = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix3d m;
  for (int j = 0; j < 9; ++j) m.data()[j] = amplitude * u(rng);
  return m;
}

/// Rotation from a random unit quaternion.
inline Matrix3d random_rotation_matrix(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

/// A strain net with small random weights in every layer.
inline StrainNet random_net(std::uint64_t seed, double scale = 0.3) {
  StrainNet net = StrainNet::initialized(seed);
  std::mt19937_64 rng(seed + 17);
  std::normal_distribution<double> n(0.0, scale / 8.0);
  for (Eigen::Index r = 0; r < net.w3().rows(); ++r)
    for (Eigen::Index c = 0; c < net.w3().cols(); ++c) net.w3()(r, c) = n(rng);
  for (Eigen::Index r = 0; r < net.b1().size(); ++r) net.b1()(r) = n(rng);
  return net;
}

} // namespace elastovox::testing
