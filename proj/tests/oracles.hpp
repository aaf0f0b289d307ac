#pragma once

// Reference computations for tests. Each one avoids the code path it checks:
// densities use explicit inverses and determinants, the velocity uses
// brute-force quadrature of the conditional expectation, Jacobians use finite
// differences, and special functions come from Boost.

#include "pfode/mixture.hpp"
#include "pfode/types.hpp"

#include <Eigen/LU>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

using pfode::Matrix;
using pfode::Vector;

struct Component {
  double weight;
  Vector mean;
  Matrix precision;
  double log_norm;  // log of the normalising constant
};

inline std::vector<Component> components_of(const pfode::GaussianMixture& gm) {
  std::vector<Component> out;
  const double n = static_cast<double>(gm.dim());
  for (std::size_t k = 0; k < gm.size(); ++k) {
    const Matrix& cov = gm.covariance(k);
    const Eigen::FullPivLU<Matrix> lu(cov);
    out.push_back({gm.weights()[k], gm.mean(k), lu.inverse(),
                   -0.5 * (n * std::log(2.0 * std::numbers::pi) + std::log(lu.determinant()))});
  }
  return out;
}

inline double log_mixture_density(const std::vector<Component>& comps, const Vector& x) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for (const auto& c : comps) {
    const Vector d = x - c.mean;
    terms.push_back(std::log(c.weight) + c.log_norm - 0.5 * d.dot(c.precision * d));
    best = std::max(best, terms.back());
  }
  double sum = 0.0;
  for (double v : terms) sum += std::exp(v - best);
  return best + std::log(sum);
}

inline double log_std_normal(const Vector& z) {
  return -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
}

// E[Z - X | X_t = x] by trapezoid quadrature over X = u on a box of
// half-width `half_width` (n = 1 or 2). With X_t = (1-t)u + tZ the joint
// density along the fibre is p(u) gamma((x - (1-t)u) / t), up to a constant.
inline Vector velocity_quadrature(const pfode::GaussianMixture& gm, const Vector& x, double t,
                                  double spacing, double half_width = 4.0) {
  const auto comps = components_of(gm);
  const Eigen::Index n = x.size();
  const int nodes = static_cast<int>(std::ceil(2.0 * half_width / spacing)) + 1;
  const double h = 2.0 * half_width / (nodes - 1);
  std::vector<Vector> points;
  std::vector<double> logs;
  auto visit = [&](const Vector& u) {
    const Vector z = (x - (1.0 - t) * u) / t;
    points.push_back(z - u);
    logs.push_back(log_mixture_density(comps, u) + log_std_normal(z));
  };
  Vector u(n);
  if (n == 1) {
    for (int i = 0; i < nodes; ++i) {
      u[0] = -half_width + i * h;
      visit(u);
    }
  } else {
    for (int i = 0; i < nodes; ++i) {
      for (int j = 0; j < nodes; ++j) {
        u[0] = -half_width + i * h;
        u[1] = -half_width + j * h;
        visit(u);
      }
    }
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  Vector num = Vector::Zero(n);
  double den = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const double w = std::exp(logs[i] - top);
    num += w * points[i];
    den += w;
  }
  return num / den;
}

inline Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& f,
                                         const Vector& x, double step) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector up = x, down = x;
    up[j] += step;
    down[j] -= step;
    jac.col(j) = (f(up) - f(down)) / (2.0 * step);
  }
  return jac;
}

inline Matrix matrix_exponential(const Matrix& a) { return a.exp(); }

// Largest singular value by power iteration on A^T A.
inline double power_iteration_top(const Matrix& a, int iterations = 2000) {
  const Matrix ata = a.transpose() * a;
  Vector v = Vector::Ones(a.cols()).normalized();
  for (int i = 0; i < iterations; ++i) v = (ata * v).normalized();
  return std::sqrt(v.dot(ata * v));
}

inline double chi_square_upper_tail(double dof, double x) {
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

inline double normal_cdf(double x) { return boost::math::cdf(boost::math::normal(), x); }

// Numerically integrated 1-D mass of U[-h, h] * N(0, w^2) inside [-h, h].
inline double convolved_mass_inside(double h, double w, int nodes = 20001) {
  const double step = 2.0 * h / (nodes - 1);
  double total = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double x = -h + i * step;
    const double density = (normal_cdf((x + h) / w) - normal_cdf((x - h) / w)) / (2.0 * h);
    total += (i == 0 || i == nodes - 1 ? 0.5 : 1.0) * density * step;
  }
  return total;
}

// Least-squares slope of log(err) against log(steps), negated.
inline double convergence_order(const std::vector<int>& steps, const std::vector<double>& errors) {
  const std::size_t m = steps.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double lx = std::log(static_cast<double>(steps[i]));
    const double ly = std::log(errors[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return -(m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace oracle
