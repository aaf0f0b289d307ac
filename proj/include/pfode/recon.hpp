#pragma once

#include "pfode/mixture.hpp"
#include "pfode/ode.hpp"
#include "pfode/random.hpp"
#include "pfode/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace pfode {

/// (1 / sqrt(n)) |x - x_hat|.
double reconstruction_error(const Vector& x, const Vector& x_hat);

struct PointInstability {
  double mean = 0.0;
  std::vector<double> coefficients;
};

/// Regenerates from z_hat + magnitude * u for k random unit directions u and
/// returns |G(z_hat + magnitude u) - G(z_hat)| / magnitude per direction.
PointInstability estimate_point_instability(const GaussianMixture& gm, const Vector& z_hat,
                                            const SolverConfig& cfg, int k_directions,
                                            double magnitude, Rng& rng);
/// Same with caller-supplied directions and a precomputed G(z_hat).
PointInstability estimate_point_instability(const GaussianMixture& gm, const Vector& z_hat,
                                            const Vector& x_hat, const SolverConfig& cfg,
                                            const std::vector<Vector>& directions,
                                            double magnitude);

/// Default perturbation magnitude 1e-3 * sqrt(n).
inline double default_magnitude(Eigen::Index n) { return 1e-3 * std::sqrt(static_cast<double>(n)); }

struct CorrelationRecord {
  std::size_t index = 0;
  Vector initial_point;
  Vector inverted_noise;
  double reconstruction_error = 0.0;
  double mean_realized_coefficient = 0.0;
  std::vector<double> coefficients;
};

struct CorrelationResult {
  std::vector<CorrelationRecord> records;
  std::size_t failed = 0;  // records dropped after a solver failure
  // Empty when either column is constant (flagged as degenerate).
  std::optional<double> pearson;
  std::optional<double> spearman;
  // Spearman after a seeded shuffle of the reconstruction-error column.
  std::optional<double> permutation_spearman;
  bool degenerate = false;
};

using PointSampler = std::function<Vector(Rng&)>;

PointSampler uniform_cube_sampler(Eigen::Index n, double low, double high);

/// For record i, stream (seed, i) draws x from the sampler and then the k
/// perturbation directions. Records are independent and evaluated on up to
/// `threads` workers.
CorrelationResult correlation_experiment(const GaussianMixture& gm, const PointSampler& sampler,
                                         std::size_t count, const SolverConfig& cfg_inversion,
                                         const SolverConfig& cfg_generation, int k_directions,
                                         double magnitude, std::uint64_t seed,
                                         unsigned threads = 1);

std::optional<double> pearson_correlation(std::span<const double> a, std::span<const double> b);
std::optional<double> spearman_correlation(std::span<const double> a, std::span<const double> b);
/// Ranks starting at 1, ties receive their average rank.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace pfode
