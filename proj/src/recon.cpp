#include "pfode/recon.hpp"

#include "pfode/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pfode {

namespace {

// Columns whose spread is below this (relative to max(1, |values|)) are
// treated as constant: solver round-off must not masquerade as signal.
constexpr double kConstantSpread = 1e-6;

bool is_constant(const std::vector<double>& values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double scale = std::max({1.0, std::abs(*lo), std::abs(*hi)});
  return (*hi - *lo) <= kConstantSpread * scale;
}

}  // namespace

double reconstruction_error(const Vector& x, const Vector& x_hat) {
  if (x.size() != x_hat.size() || x.size() == 0) {
    throw std::invalid_argument("reconstruction_error: dimension mismatch");
  }
  return (x - x_hat).norm() / std::sqrt(static_cast<double>(x.size()));
}

PointInstability estimate_point_instability(const GaussianMixture& gm, const Vector& z_hat,
                                            const Vector& x_hat, const SolverConfig& cfg,
                                            const std::vector<Vector>& directions,
                                            double magnitude) {
  if (directions.empty()) throw std::invalid_argument("estimate_point_instability: no directions");
  if (!(magnitude > 0.0)) {
    throw std::invalid_argument("estimate_point_instability: magnitude must be > 0");
  }
  PointInstability out;
  for (const Vector& u : directions) {
    const Vector n = magnitude * u / u.norm();
    const Vector x_tilde = generate(gm, z_hat + n, cfg);
    out.coefficients.push_back((x_tilde - x_hat).norm() / n.norm());
  }
  out.mean = std::accumulate(out.coefficients.begin(), out.coefficients.end(), 0.0) /
             static_cast<double>(out.coefficients.size());
  return out;
}

PointInstability estimate_point_instability(const GaussianMixture& gm, const Vector& z_hat,
                                            const SolverConfig& cfg, int k_directions,
                                            double magnitude, Rng& rng) {
  if (k_directions < 1) throw std::invalid_argument("estimate_point_instability: k must be >= 1");
  std::vector<Vector> directions;
  for (int k = 0; k < k_directions; ++k) directions.push_back(random_unit_vector(rng, gm.dim()));
  return estimate_point_instability(gm, z_hat, generate(gm, z_hat, cfg), cfg, directions,
                                    magnitude);
}

PointSampler uniform_cube_sampler(Eigen::Index n, double low, double high) {
  if (!(high > low)) throw std::invalid_argument("uniform sampler: empty range");
  return [n, low, high](Rng& rng) { return uniform_vector(rng, n, low, high); };
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson_correlation: length mismatch");
  if (a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::optional<double> spearman_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman_correlation: length mismatch");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  return pearson_correlation(ra, rb);
}

CorrelationResult correlation_experiment(const GaussianMixture& gm, const PointSampler& sampler,
                                         std::size_t count, const SolverConfig& cfg_inversion,
                                         const SolverConfig& cfg_generation, int k_directions,
                                         double magnitude, std::uint64_t seed, unsigned threads) {
  if (count < 3) throw std::invalid_argument("correlation_experiment: count must be >= 3");
  if (k_directions < 1) throw std::invalid_argument("correlation_experiment: k must be >= 1");
  if (!(magnitude > 0.0)) {
    throw std::invalid_argument("correlation_experiment: magnitude must be > 0");
  }
  cfg_inversion.validate();
  cfg_generation.validate();

  std::vector<std::optional<CorrelationRecord>> slots(count);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    CorrelationRecord rec;
    rec.index = i;
    rec.initial_point = sampler(rng);
    std::vector<Vector> directions;
    for (int k = 0; k < k_directions; ++k) directions.push_back(random_unit_vector(rng, gm.dim()));
    try {
      const Reconstruction r = reconstruct(gm, rec.initial_point, cfg_inversion, cfg_generation);
      rec.inverted_noise = r.inverted_noise;
      rec.reconstruction_error = reconstruction_error(rec.initial_point, r.reconstructed);
      const PointInstability pi = estimate_point_instability(
          gm, r.inverted_noise, r.reconstructed, cfg_generation, directions, magnitude);
      rec.mean_realized_coefficient = pi.mean;
      rec.coefficients = pi.coefficients;
    } catch (const SolverError&) {
      return;
    }
    if (!std::isfinite(rec.reconstruction_error) || !std::isfinite(rec.mean_realized_coefficient)) {
      return;
    }
    slots[i] = std::move(rec);
  });

  CorrelationResult out;
  for (auto& slot : slots) {
    if (slot) {
      out.records.push_back(std::move(*slot));
    } else {
      ++out.failed;
    }
  }
  if (out.records.size() < 3) {
    throw std::runtime_error("correlation_experiment: fewer than 3 valid records");
  }

  std::vector<double> errors, coefficients;
  for (const auto& rec : out.records) {
    errors.push_back(rec.reconstruction_error);
    coefficients.push_back(rec.mean_realized_coefficient);
  }
  if (is_constant(errors) || is_constant(coefficients)) {
    out.degenerate = true;
    return out;
  }
  out.pearson = pearson_correlation(errors, coefficients);
  out.spearman = spearman_correlation(errors, coefficients);
  std::vector<double> shuffled = errors;
  Rng shuffle_rng = make_stream(seed, ~std::uint64_t{0});
  std::shuffle(shuffled.begin(), shuffled.end(), shuffle_rng);
  out.permutation_spearman = spearman_correlation(shuffled, coefficients);
  out.degenerate = !out.pearson.has_value() || !out.spearman.has_value();
  return out;
}

}  // namespace pfode
