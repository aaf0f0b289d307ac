#pragma once

#include "pfode/mixture.hpp"
#include "pfode/ode.hpp"
#include "pfode/types.hpp"

#include <functional>
#include <vector>

namespace pfode {

/// Directional Jacobian gain |J u| / |u| at a point.
struct DirectionalCoefficient {
  Vector point;
  Vector direction;
  double value = 0.0;
};

/// Finite-perturbation gain |F(x + n) - F(x)| / |n|.
struct RealizedCoefficient {
  Vector perturbation;
  double value = 0.0;
};

struct InstabilityReport {
  Vector point;
  Vector inverted_noise;
  std::vector<DirectionalCoefficient> intrinsic_coeffs;
  std::vector<RealizedCoefficient> realized_coeffs;
  double geometric_average = 0.0;
  double reconstruction_error = 0.0;
};

using Flow = std::function<Vector(const Vector&)>;

double intrinsic_coefficient(const Matrix& jacobian, const Vector& direction);

double realized_coefficient(const Flow& flow, const Vector& x, const Vector& perturbation);

/// (prod sigma_i)^(1/n) via the SVD; throws when sigma_min < 1e-300.
double geometric_average_via_jacobian(const Matrix& jacobian);

/// log of (gamma(z) / p_gen(G(z)))^(1/n), with G the numerical generation map.
double log_geometric_average_via_density(const GaussianMixture& gm, const Vector& z,
                                         const SolverConfig& cfg);
double geometric_average_via_density(const GaussianMixture& gm, const Vector& z,
                                     const SolverConfig& cfg);
/// Same quantity when G(z) is already known.
double log_geometric_average_from_endpoints(const GaussianMixture& gm, const Vector& z,
                                            const Vector& generated);

struct SingularDirection {
  Vector direction;  // unit right singular vector
  double value = 0.0;
};
SingularDirection top_singular_direction(const Matrix& jacobian);

struct InstabilityEffect {
  Vector perturbation;
  double intrinsic = 0.0;  // E along the top singular direction
  double realized = 0.0;   // A at the returned perturbation
  bool success = false;
};

inline const std::vector<double>& perturbation_ladder() {
  static const std::vector<double> ladder{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  return ladder;
}

/// Shrinks n = s h along the top singular direction h of `jacobian` until
/// A(x, n) >= E / (1 + delta). Reports the last attempt on failure.
InstabilityEffect verify_instability_effect(const Flow& flow, const Matrix& jacobian,
                                            const Vector& x, double delta);
/// Generation-map version: J from the variational equation at z.
InstabilityEffect verify_instability_effect(const GaussianMixture& gm, const Vector& z,
                                            double delta, const SolverConfig& cfg);

enum class GridAxis { x, y };

struct GridSpec {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  int nx = 201, ny = 201;
  GridAxis axis = GridAxis::y;
};

/// Forward adjacent-difference coefficients |G(p_next) - G(p)| / |p_next - p|.
/// For GridAxis::y, coefficients(j, i) pairs node (i, j) with (i, j + 1) and has
/// ny - 1 rows and nx columns; for GridAxis::x it has ny rows and nx - 1 columns.
struct GridMap {
  std::vector<double> xs;
  std::vector<double> ys;
  GridAxis axis = GridAxis::y;
  Matrix coefficients;
};

GridMap grid_intrinsic_map(const GaussianMixture& gm, const GridSpec& grid,
                           const SolverConfig& cfg, unsigned threads = 1);

struct GronwallEstimates {
  double lipschitz = 0.0;          // max_t |dv/dx|_2 along the path
  double second_derivative = 0.0;  // max_t |dv/dt + (dv/dx) v|
};

GronwallEstimates gronwall_estimates(const JacobianField& field, const Trajectory& trajectory);
GronwallEstimates gronwall_estimates(const GaussianMixture& gm, const Trajectory& trajectory);

/// h M2 (C - 1) / (2 ln C) * C, defined for C > 1.
double recon_error_bound_term(double step, double m2, double c);

/// Full per-point record: inversion, reconstruction error, flow Jacobian at
/// the inverted noise, intrinsic and realized coefficients along each right
/// singular direction (realized at `magnitude`).
InstabilityReport analyze_point(const GaussianMixture& gm, const Vector& x,
                                const SolverConfig& cfg_inversion,
                                const SolverConfig& cfg_generation, double magnitude);

}  // namespace pfode
