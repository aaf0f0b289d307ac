#include "pfode/instability.hpp"

#include "pfode/linalg.hpp"
#include "pfode/parallel.hpp"
#include "pfode/special.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pfode {

namespace {
constexpr double kDegenerateSingularValue = 1e-300;
constexpr double kTimeStep = 1e-5;
}  // namespace

double intrinsic_coefficient(const Matrix& jacobian, const Vector& direction) {
  if (direction.size() != jacobian.cols()) {
    throw std::invalid_argument("intrinsic_coefficient: dimension mismatch");
  }
  const double norm = direction.norm();
  if (norm == 0.0) throw std::invalid_argument("intrinsic_coefficient: zero direction");
  return (jacobian * direction).norm() / norm;
}

double realized_coefficient(const Flow& flow, const Vector& x, const Vector& perturbation) {
  const double norm = perturbation.norm();
  if (norm == 0.0) throw std::invalid_argument("realized_coefficient: zero perturbation");
  return (flow(x + perturbation) - flow(x)).norm() / norm;
}

double geometric_average_via_jacobian(const Matrix& jacobian) {
  const Vector sv = jacobi_svd(jacobian).singular_values;
  if (sv[sv.size() - 1] < kDegenerateSingularValue) {
    throw std::domain_error("geometric_average_via_jacobian: singular Jacobian (degenerate flow)");
  }
  return std::exp(sv.array().log().sum() / static_cast<double>(sv.size()));
}

double log_geometric_average_from_endpoints(const GaussianMixture& gm, const Vector& z,
                                            const Vector& generated) {
  const double n = static_cast<double>(gm.dim());
  const double log_gamma = -0.5 * z.squaredNorm() - 0.5 * n * kLogTwoPi;
  return (log_gamma - log_density(gm, generated)) / n;
}

double log_geometric_average_via_density(const GaussianMixture& gm, const Vector& z,
                                         const SolverConfig& cfg) {
  if (!z.allFinite()) throw std::invalid_argument("geometric_average_via_density: non-finite z");
  return log_geometric_average_from_endpoints(gm, z, generate(gm, z, cfg));
}

double geometric_average_via_density(const GaussianMixture& gm, const Vector& z,
                                     const SolverConfig& cfg) {
  return std::exp(log_geometric_average_via_density(gm, z, cfg));
}

SingularDirection top_singular_direction(const Matrix& jacobian) {
  const Svd svd = jacobi_svd(jacobian);
  return SingularDirection{svd.v.col(0), svd.singular_values[0]};
}

InstabilityEffect verify_instability_effect(const Flow& flow, const Matrix& jacobian,
                                            const Vector& x, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("verify_instability_effect: delta must be > 0");
  const SingularDirection top = top_singular_direction(jacobian);
  InstabilityEffect out;
  out.intrinsic = top.value;
  const double target = top.value / (1.0 + delta);
  const Vector base = flow(x);
  for (double magnitude : perturbation_ladder()) {
    out.perturbation = magnitude * top.direction;
    out.realized = (flow(x + out.perturbation) - base).norm() / out.perturbation.norm();
    if (out.realized >= target) {
      out.success = true;
      break;
    }
  }
  return out;
}

InstabilityEffect verify_instability_effect(const GaussianMixture& gm, const Vector& z,
                                            double delta, const SolverConfig& cfg) {
  const FlowJacobian fj = integrate_with_jacobian(gm, z, 1.0, 0.0, cfg);
  Flow flow = [&gm, &cfg](const Vector& p) { return generate(gm, p, cfg); };
  return verify_instability_effect(flow, fj.jacobian, z, delta);
}

GridMap grid_intrinsic_map(const GaussianMixture& gm, const GridSpec& grid,
                           const SolverConfig& cfg, unsigned threads) {
  if (gm.dim() != 2) throw std::invalid_argument("grid_intrinsic_map: mixture must be 2-D");
  if (grid.nx < 2 || grid.ny < 2) {
    throw std::invalid_argument("grid_intrinsic_map: need at least 2 nodes per axis");
  }
  if (!(grid.x_max > grid.x_min) || !(grid.y_max > grid.y_min)) {
    throw std::invalid_argument("grid_intrinsic_map: empty range");
  }
  GridMap out;
  out.axis = grid.axis;
  const auto nx = static_cast<std::size_t>(grid.nx);
  const auto ny = static_cast<std::size_t>(grid.ny);
  for (std::size_t i = 0; i < nx; ++i) {
    out.xs.push_back(grid.x_min + (grid.x_max - grid.x_min) * static_cast<double>(i) /
                                      static_cast<double>(nx - 1));
  }
  for (std::size_t j = 0; j < ny; ++j) {
    out.ys.push_back(grid.y_min + (grid.y_max - grid.y_min) * static_cast<double>(j) /
                                      static_cast<double>(ny - 1));
  }

  std::vector<Vector> generated(nx * ny);
  parallel_for(nx * ny, threads, [&](std::size_t idx) {
    const std::size_t i = idx % nx;
    const std::size_t j = idx / nx;
    generated[idx] = generate(gm, Vector{{out.xs[i], out.ys[j]}}, cfg);
  });

  auto node = [&](std::size_t i, std::size_t j) { return Vector{{out.xs[i], out.ys[j]}}; };
  if (grid.axis == GridAxis::y) {
    out.coefficients.resize(static_cast<Eigen::Index>(ny - 1), static_cast<Eigen::Index>(nx));
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const double num = (generated[(j + 1) * nx + i] - generated[j * nx + i]).norm();
        const double den = (node(i, j + 1) - node(i, j)).norm();
        out.coefficients(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = num / den;
      }
    }
  } else {
    out.coefficients.resize(static_cast<Eigen::Index>(ny), static_cast<Eigen::Index>(nx - 1));
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i + 1 < nx; ++i) {
        const double num = (generated[j * nx + i + 1] - generated[j * nx + i]).norm();
        const double den = (node(i + 1, j) - node(i, j)).norm();
        out.coefficients(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = num / den;
      }
    }
  }
  return out;
}

GronwallEstimates gronwall_estimates(const JacobianField& field, const Trajectory& trajectory) {
  if (trajectory.times.empty()) throw std::invalid_argument("gronwall_estimates: empty trajectory");
  GronwallEstimates out;
  for (std::size_t i = 0; i < trajectory.times.size(); ++i) {
    const double t = trajectory.times[i];
    const Vector& x = trajectory.states[i];
    const auto [v, dv] = field(t, x);
    out.lipschitz = std::max(out.lipschitz, operator_norm(dv));

    const double lo = std::max(0.0, t - kTimeStep);
    const double hi = std::min(1.0, t + kTimeStep);
    const Vector dv_dt = (field(hi, x).first - field(lo, x).first) / (hi - lo);
    out.second_derivative = std::max(out.second_derivative, (dv_dt + dv * v).norm());
  }
  return out;
}

GronwallEstimates gronwall_estimates(const GaussianMixture& gm, const Trajectory& trajectory) {
  return gronwall_estimates(jacobian_field(gm), trajectory);
}

double recon_error_bound_term(double step, double m2, double c) {
  if (!(step > 0.0) || !(m2 > 0.0)) {
    throw std::invalid_argument("recon_error_bound_term: h and M2 must be positive");
  }
  if (!(c > 1.0)) throw std::invalid_argument("recon_error_bound_term: requires C > 1");
  return step * m2 * (c - 1.0) / (2.0 * std::log(c)) * c;
}

InstabilityReport analyze_point(const GaussianMixture& gm, const Vector& x,
                                const SolverConfig& cfg_inversion,
                                const SolverConfig& cfg_generation, double magnitude) {
  if (!(magnitude > 0.0)) throw std::invalid_argument("analyze_point: magnitude must be > 0");
  InstabilityReport report;
  report.point = x;
  const Reconstruction rec = reconstruct(gm, x, cfg_inversion, cfg_generation);
  report.inverted_noise = rec.inverted_noise;
  report.reconstruction_error =
      (x - rec.reconstructed).norm() / std::sqrt(static_cast<double>(x.size()));

  const FlowJacobian fj = integrate_with_jacobian(gm, rec.inverted_noise, 1.0, 0.0, cfg_generation);
  const Svd svd = jacobi_svd(fj.jacobian);
  report.geometric_average = geometric_average_via_jacobian(fj.jacobian);
  Flow flow = [&](const Vector& p) { return generate(gm, p, cfg_generation); };
  for (Eigen::Index k = 0; k < svd.v.cols(); ++k) {
    const Vector dir = svd.v.col(k);
    report.intrinsic_coeffs.push_back(
        {rec.inverted_noise, dir, intrinsic_coefficient(fj.jacobian, dir)});
    const Vector n = magnitude * dir;
    report.realized_coeffs.push_back({n, realized_coefficient(flow, rec.inverted_noise, n)});
  }
  return report;
}

}  // namespace pfode
