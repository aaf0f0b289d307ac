#pragma once

#include "pfode/mixture.hpp"
#include "pfode/ode.hpp"
#include "pfode/recon.hpp"
#include "pfode/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace pfode {

/// Binomial proportion with a 3-sigma normal-approximation half-width.
struct Proportion {
  std::size_t hits = 0;
  std::size_t total = 0;
  double estimate = 0.0;
  double ci_half_width = 0.0;
};
Proportion make_proportion(std::size_t hits, std::size_t total);

/// Squared-norm radius 2n + 3 sqrt(2n).
double norm_threshold(int n);

/// Density level (2 pi M^2)^(-n/2) exp(-(2n + 3 sqrt(2n)) / 2) and its log.
double log_epsilon_threshold(int n, double m);
double epsilon_threshold(int n, double m);

/// Upper tail of chi-square with n degrees of freedom at 2n + 3 sqrt(2n).
double chi_square_tail(int n);

/// min_i exp(dbar^2 / (8 w_i) - ln(1 / w_i) + 2 + 3 sqrt(2 / n)), evaluated as printed.
double m0_threshold(double dbar_min, const std::vector<double>& kernel_widths, int n);

enum class GeometricRoute { jacobian, density };
std::string to_string(GeometricRoute route);
GeometricRoute route_from_string(const std::string& name);

using LogDensityFn = std::function<double(const Vector&)>;

/// Fraction of real samples with log p_gen(x) >= log threshold(n, M).
Proportion epsilon_hat(const PointSampler& sampler, const LogDensityFn& log_density_fn, int n,
                       double m, std::size_t count, std::uint64_t seed, unsigned threads = 1);

/// Fraction of real samples whose inverted noise has |G^-1(x)|^2 > 2n + 3 sqrt(2n).
Proportion delta_hat(const PointSampler& sampler, const GaussianMixture& gm,
                     const SolverConfig& cfg, std::size_t count, std::uint64_t seed,
                     unsigned threads = 1);

/// Fraction of real samples with geometric-average coefficient at G^-1(x) above M.
Proportion p_m_hat(const PointSampler& sampler, const GaussianMixture& gm, const SolverConfig& cfg,
                   double m, std::size_t count, std::uint64_t seed, GeometricRoute route,
                   unsigned threads = 1);

struct BoundReport {
  int n = 0;
  double m = 0.0;
  std::size_t sample_count = 0;
  Proportion eps;
  Proportion delta;
  Proportion p;
  double lower_bound = 0.0;  // 1 - eps - delta
  double margin = 0.0;       // sum of the three half-widths
  bool inequality_satisfied = false;
};

/// Assembles the report and checks p >= 1 - eps - delta - margin.
BoundReport verify_lower_bound(const Proportion& eps, const Proportion& delta, const Proportion& p,
                               int n, double m);

/// Runs all three estimators in one pass over shared samples (sample i uses
/// stream (seed, i) in every estimator).
BoundReport estimate_bound(const PointSampler& sampler, const GaussianMixture& gm,
                           const LogDensityFn& log_density_fn, const SolverConfig& cfg, double m,
                           std::size_t count, std::uint64_t seed, GeometricRoute route,
                           unsigned threads = 1);

/// x = G(z) with z ~ N(0, I): real samples drawn from the generation distribution.
PointSampler generation_sampler(const GaussianMixture& gm, const SolverConfig& cfg);

struct SparsityScanConfig {
  std::vector<int> dims{2, 4, 8, 16};
  int m = 4;
  double dbar_min = 0.5;
  double half_width = 0.05;
  double alpha = 0.9;
  double threshold_m = 1.5;
  std::size_t samples = 2000;
  std::uint64_t seed = 20240501;
  SolverConfig solver;

  void validate() const;
};

/// Per-axis quantile rule: w = h / Phi^-1((1 + alpha^(1/n)) / 2), so that the
/// centred kernel puts mass alpha inside the cube.
double kernel_width_for_mass(double half_width, double alpha, int n);

/// m centers in [0, 1]^n: 0.5 + s * sign pattern, scaled so the minimum
/// pairwise distance is exactly dbar_min * sqrt(n). A single center sits at
/// the middle of the cube.
std::vector<Vector> scan_centers(int n, int m, double dbar_min);

struct ScanLevel {
  int n = 0;
  double kernel_width = 0.0;
  double min_distance = 0.0;
  double inside_mass = 0.0;
  double m0 = 0.0;
  BoundReport report;
  double wall_seconds = 0.0;
};

std::vector<ScanLevel> sparsity_scan(const SparsityScanConfig& config, unsigned threads = 1);

}  // namespace pfode
