#include "pfode/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace pfode {

namespace {
constexpr double kOffDiagonalTolerance = 1e-12;
constexpr int kMaxSweeps = 100;
}  // namespace

Svd jacobi_svd(const Matrix& a) {
  if (a.rows() < a.cols() || a.cols() == 0) {
    throw std::invalid_argument("jacobi_svd expects a nonempty matrix with rows >= cols");
  }
  if (!a.allFinite()) throw std::invalid_argument("jacobi_svd: matrix has non-finite entries");

  const Eigen::Index n = a.cols();
  Matrix work = a;
  Matrix v = Matrix::Identity(n, n);

  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = work.col(p).squaredNorm();
        const double beta = work.col(q).squaredNorm();
        const double gamma = work.col(p).dot(work.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= kOffDiagonalTolerance * std::sqrt(alpha * beta)) {
          continue;
        }
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index r = 0; r < work.rows(); ++r) {
          const double wp = work(r, p);
          const double wq = work(r, q);
          work(r, p) = c * wp - s * wq;
          work(r, q) = s * wp + c * wq;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const double vp = v(r, p);
          const double vq = v(r, q);
          v(r, p) = c * vp - s * vq;
          v(r, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) throw std::runtime_error("jacobi_svd: no convergence");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Vector norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms[j] = work.col(j).norm();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return norms[i] > norms[j]; });

  Svd out;
  out.singular_values.resize(n);
  out.u = Matrix::Zero(a.rows(), n);
  out.v.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index j = order[static_cast<std::size_t>(k)];
    out.singular_values[k] = norms[j];
    out.v.col(k) = v.col(j);
    if (norms[j] > 0.0) out.u.col(k) = work.col(j) / norms[j];
  }
  return out;
}

double operator_norm(const Matrix& a) { return jacobi_svd(a).singular_values[0]; }

}  // namespace pfode
