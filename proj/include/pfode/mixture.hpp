#pragma once

#include "pfode/random.hpp"
#include "pfode/types.hpp"

#include <cstddef>
#include <vector>

namespace pfode {

/// Gaussian mixture sum_k w_k N(mu_k, Sigma_k). Weights must be positive and
/// sum to one within 1e-12; every covariance must be symmetric positive
/// definite (a Cholesky factor is computed and cached at construction).
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Vector> means,
                  std::vector<Matrix> covariances);

  static GaussianMixture standard_normal(Eigen::Index dim);
  // Components N(mu_k, variance_k * I).
  static GaussianMixture isotropic(std::vector<double> weights, std::vector<Vector> means,
                                   const std::vector<double>& variances);

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }

  const std::vector<double>& weights() const { return weights_; }
  const Vector& mean(std::size_t k) const { return means_[k]; }
  const Matrix& covariance(std::size_t k) const { return covariances_[k]; }
  const Matrix& cholesky_factor(std::size_t k) const { return cholesky_[k]; }
  double log_det_covariance(std::size_t k) const { return log_det_[k]; }
  bool is_diagonal(std::size_t k) const { return diagonal_[k] != 0; }
  double log_weight(std::size_t k) const { return log_weights_[k]; }

  // Analytic mixture moments.
  Vector mixture_mean() const;
  Matrix mixture_covariance() const;

 private:
  Eigen::Index dim_ = 0;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  std::vector<Matrix> cholesky_;
  std::vector<double> log_det_;
  std::vector<char> diagonal_;
};

/// Law of X_t = (1 - t) X + t Z with X ~ base mixture, Z ~ N(0, I).
struct TimeMarginal {
  double time;
  GaussianMixture law;
};

double log_density(const GaussianMixture& gm, const Vector& x);
double density(const GaussianMixture& gm, const Vector& x);

std::vector<Vector> sample(const GaussianMixture& gm, Rng& rng, std::size_t count);
Vector sample_one(const GaussianMixture& gm, Rng& rng);

TimeMarginal marginal_at_time(const GaussianMixture& gm, double t);

/// Flow-matching velocity v(x, t) = E[Z - X | X_t = x] in closed form.
Vector velocity(const GaussianMixture& gm, const Vector& x, double t);
/// Jacobian d v / d x.
Matrix velocity_jacobian(const GaussianMixture& gm, const Vector& x, double t);
/// Trace of velocity_jacobian.
double divergence(const GaussianMixture& gm, const Vector& x, double t);

struct FieldValue {
  Vector velocity;
  Matrix jacobian;  // empty unless requested
};
FieldValue evaluate_field(const GaussianMixture& gm, const Vector& x, double t,
                          bool with_jacobian);

/// Mixture of Gaussian neighbors: sum_i a_i (U(B_i) * N(0, w_i^2 I)) with
/// B_i the axis-aligned cube of half-width h_i around c_i. Cubes must be
/// pairwise disjoint; the minimum pairwise center distance is recorded.
class NeighborMixture {
 public:
  NeighborMixture(std::vector<double> weights, std::vector<Vector> centers,
                  std::vector<double> half_widths, std::vector<double> kernel_widths,
                  double required_min_distance = 0.0);

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const Vector& center(std::size_t i) const { return centers_[i]; }
  double half_width(std::size_t i) const { return half_widths_[i]; }
  double kernel_width(std::size_t i) const { return kernel_widths_[i]; }
  const std::vector<double>& kernel_widths() const { return kernel_widths_; }

  // Minimum pairwise center distance (infinity for a single component), and
  // the same divided by sqrt(n).
  double min_distance() const { return min_distance_; }
  double normalized_min_distance() const { return normalized_min_distance_; }

 private:
  Eigen::Index dim_ = 0;
  std::vector<double> weights_;
  std::vector<Vector> centers_;
  std::vector<double> half_widths_;
  std::vector<double> kernel_widths_;
  double min_distance_ = 0.0;
  double normalized_min_distance_ = 0.0;
};

double neighbor_log_density(const NeighborMixture& nm, const Vector& x);
double neighbor_density(const NeighborMixture& nm, const Vector& x);

/// prod_d [Phi(h/w) - Phi(-h/w)]: mass of a kernel centred in the cube that
/// falls inside it. Upper-bounds the exact component mass inside B_i.
double component_mass_inside_cube(const NeighborMixture& nm, std::size_t i);

/// Gaussian stand-in with components N(c_i, w_i^2 I) and weights a_i; the
/// limit of the neighbor mixture as the cubes shrink to their centers.
GaussianMixture gaussian_surrogate(const NeighborMixture& nm);

}  // namespace pfode
