#pragma once

#include "pfode/config.hpp"
#include "pfode/mixture.hpp"

namespace fixtures {

using pfode::GaussianMixture;
using pfode::Matrix;
using pfode::Vector;

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

// Broad, overlapping components with one full covariance.
inline GaussianMixture mild_2d() {
  Matrix c0(2, 2);
  c0 << 0.5, 0.1, 0.1, 0.4;
  Matrix c1 = vec({0.6, 0.3}).asDiagonal();
  return GaussianMixture({0.4, 0.6}, {vec({-0.8, 0.3}), vec({0.7, -0.4})}, {c0, c1});
}

inline GaussianMixture mild_3d() {
  Matrix c0 = Matrix::Identity(3, 3) * 0.5;
  c0(0, 1) = c0(1, 0) = 0.15;
  Matrix c1 = vec({0.4, 0.7, 0.3}).asDiagonal();
  return GaussianMixture({0.5, 0.5}, {vec({0.5, -0.3, 0.2}), vec({-0.6, 0.4, -0.1})}, {c0, c1});
}

inline GaussianMixture bimodal_1d() {
  return GaussianMixture::isotropic({0.5, 0.5}, {vec({-1.0}), vec({1.0})}, {0.04, 0.04});
}

inline GaussianMixture bimodal_2d() {
  Matrix c0(2, 2);
  c0 << 0.09, 0.02, 0.02, 0.05;
  return GaussianMixture({0.3, 0.7}, {vec({-0.7, 0.2}), vec({0.6, -0.5})},
                         {c0, Matrix::Identity(2, 2) * 0.06});
}

// Three tight modes in [-1, 1]^2 separated by low-density gaps.
inline GaussianMixture sparse_2d() { return pfode::default_three_mode_mixture(); }

}  // namespace fixtures
