#include "pfode/bounds.hpp"

#include "pfode/instability.hpp"
#include "pfode/parallel.hpp"
#include "pfode/special.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pfode {

namespace {

constexpr int kMaxJacobianDim = 16;

void check_count(std::size_t count) {
  if (count < 100) throw std::invalid_argument("Monte Carlo estimators require N >= 100");
}

struct SampleFlags {
  char eps = 0;
  char delta = 0;
  char p = 0;
};

bool exceeds_m(const GaussianMixture& gm, const Vector& z_hat, const SolverConfig& cfg, double m,
               GeometricRoute route) {
  if (route == GeometricRoute::jacobian) {
    const FlowJacobian fj = integrate_with_jacobian(gm, z_hat, 1.0, 0.0, cfg);
    return geometric_average_via_jacobian(fj.jacobian) > m;
  }
  return log_geometric_average_via_density(gm, z_hat, cfg) > std::log(m);
}

void check_route(GeometricRoute route, Eigen::Index n) {
  if (route == GeometricRoute::jacobian && n > kMaxJacobianDim) {
    throw std::invalid_argument("jacobian route is limited to n <= 16");
  }
}

std::size_t count_hits(const std::vector<char>& flags) {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
}

// Sign patterns with large pairwise Hamming distance: Sylvester-Hadamard rows
// and their negations when n is a power of two, otherwise a seeded greedy pick.
std::vector<std::vector<int>> sign_patterns(int n, int m) {
  std::vector<std::vector<int>> patterns;
  const auto un = static_cast<unsigned>(n);
  if (std::has_single_bit(un) && m <= 2 * n) {
    for (int sign : {1, -1}) {
      for (int r = 0; r < n && static_cast<int>(patterns.size()) < m; ++r) {
        std::vector<int> row(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c) {
          row[static_cast<std::size_t>(c)] =
              sign * ((std::popcount(static_cast<unsigned>(r & c)) % 2) ? -1 : 1);
        }
        patterns.push_back(row);
      }
    }
    return patterns;
  }
  Rng rng = make_stream(0x5ca1ab1e, static_cast<std::uint64_t>(n));
  std::bernoulli_distribution coin(0.5);
  auto hamming = [](const std::vector<int>& a, const std::vector<int>& b) {
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
  };
  while (static_cast<int>(patterns.size()) < m) {
    std::vector<int> best;
    int best_distance = -1;
    for (int trial = 0; trial < 256; ++trial) {
      std::vector<int> cand(static_cast<std::size_t>(n));
      for (int& c : cand) c = coin(rng) ? 1 : -1;
      int d = n;
      for (const auto& p : patterns) d = std::min(d, hamming(p, cand));
      if (d > best_distance) {
        best_distance = d;
        best = cand;
      }
    }
    if (best_distance == 0) throw std::invalid_argument("scan_centers: cannot separate centers");
    patterns.push_back(best);
  }
  return patterns;
}

}  // namespace

Proportion make_proportion(std::size_t hits, std::size_t total) {
  if (total == 0) throw std::invalid_argument("make_proportion: empty sample");
  Proportion p;
  p.hits = hits;
  p.total = total;
  p.estimate = static_cast<double>(hits) / static_cast<double>(total);
  p.ci_half_width = 3.0 * std::sqrt(p.estimate * (1.0 - p.estimate) / static_cast<double>(total));
  return p;
}

double norm_threshold(int n) {
  if (n < 1) throw std::invalid_argument("dimension must be >= 1");
  return 2.0 * n + 3.0 * std::sqrt(2.0 * n);
}

double log_epsilon_threshold(int n, double m) {
  if (!(m > 0.0)) throw std::invalid_argument("M must be positive");
  return -0.5 * n * (kLogTwoPi + 2.0 * std::log(m)) - 0.5 * norm_threshold(n);
}

double epsilon_threshold(int n, double m) { return std::exp(log_epsilon_threshold(n, m)); }

double chi_square_tail(int n) { return regularized_gamma_q(0.5 * n, 0.5 * norm_threshold(n)); }

double m0_threshold(double dbar_min, const std::vector<double>& kernel_widths, int n) {
  if (kernel_widths.empty()) throw std::invalid_argument("m0_threshold: no kernel widths");
  if (n < 1) throw std::invalid_argument("m0_threshold: dimension must be >= 1");
  double best = std::numeric_limits<double>::infinity();
  for (double w : kernel_widths) {
    if (!(w > 0.0)) throw std::invalid_argument("m0_threshold: widths must be positive");
    const double exponent = dbar_min * dbar_min / (8.0 * w) - std::log(1.0 / w) + 2.0 +
                            3.0 * std::sqrt(2.0 / n);
    best = std::min(best, std::exp(exponent));
  }
  return best;
}

std::string to_string(GeometricRoute route) {
  return route == GeometricRoute::jacobian ? "jacobian" : "density";
}

GeometricRoute route_from_string(const std::string& name) {
  if (name == "jacobian") return GeometricRoute::jacobian;
  if (name == "density") return GeometricRoute::density;
  throw std::invalid_argument("unknown route '" + name + "'");
}

Proportion epsilon_hat(const PointSampler& sampler, const LogDensityFn& log_density_fn, int n,
                       double m, std::size_t count, std::uint64_t seed, unsigned threads) {
  check_count(count);
  const double level = log_epsilon_threshold(n, m);
  std::vector<char> flags(count, 0);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    flags[i] = log_density_fn(sampler(rng)) >= level ? 1 : 0;
  });
  return make_proportion(count_hits(flags), count);
}

Proportion delta_hat(const PointSampler& sampler, const GaussianMixture& gm,
                     const SolverConfig& cfg, std::size_t count, std::uint64_t seed,
                     unsigned threads) {
  check_count(count);
  const double radius = norm_threshold(static_cast<int>(gm.dim()));
  std::vector<char> flags(count, 0);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    flags[i] = invert(gm, sampler(rng), cfg).squaredNorm() > radius ? 1 : 0;
  });
  return make_proportion(count_hits(flags), count);
}

Proportion p_m_hat(const PointSampler& sampler, const GaussianMixture& gm, const SolverConfig& cfg,
                   double m, std::size_t count, std::uint64_t seed, GeometricRoute route,
                   unsigned threads) {
  check_count(count);
  check_route(route, gm.dim());
  if (!(m > 0.0)) throw std::invalid_argument("M must be positive");
  std::vector<char> flags(count, 0);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    const Vector z_hat = invert(gm, sampler(rng), cfg);
    flags[i] = exceeds_m(gm, z_hat, cfg, m, route) ? 1 : 0;
  });
  return make_proportion(count_hits(flags), count);
}

BoundReport verify_lower_bound(const Proportion& eps, const Proportion& delta, const Proportion& p,
                               int n, double m) {
  BoundReport r;
  r.n = n;
  r.m = m;
  r.sample_count = p.total;
  r.eps = eps;
  r.delta = delta;
  r.p = p;
  r.lower_bound = 1.0 - eps.estimate - delta.estimate;
  r.margin = eps.ci_half_width + delta.ci_half_width + p.ci_half_width;
  r.inequality_satisfied = p.estimate >= r.lower_bound - r.margin;
  return r;
}

BoundReport estimate_bound(const PointSampler& sampler, const GaussianMixture& gm,
                           const LogDensityFn& log_density_fn, const SolverConfig& cfg, double m,
                           std::size_t count, std::uint64_t seed, GeometricRoute route,
                           unsigned threads) {
  check_count(count);
  check_route(route, gm.dim());
  if (!(m > 0.0)) throw std::invalid_argument("M must be positive");
  const int n = static_cast<int>(gm.dim());
  const double level = log_epsilon_threshold(n, m);
  const double radius = norm_threshold(n);
  std::vector<SampleFlags> flags(count);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    const Vector x = sampler(rng);
    SampleFlags f;
    f.eps = log_density_fn(x) >= level ? 1 : 0;
    const Vector z_hat = invert(gm, x, cfg);
    f.delta = z_hat.squaredNorm() > radius ? 1 : 0;
    f.p = exceeds_m(gm, z_hat, cfg, m, route) ? 1 : 0;
    flags[i] = f;
  });
  std::size_t eps = 0, delta = 0, p = 0;
  for (const SampleFlags& f : flags) {
    eps += static_cast<std::size_t>(f.eps);
    delta += static_cast<std::size_t>(f.delta);
    p += static_cast<std::size_t>(f.p);
  }
  return verify_lower_bound(make_proportion(eps, count), make_proportion(delta, count),
                            make_proportion(p, count), n, m);
}

PointSampler generation_sampler(const GaussianMixture& gm, const SolverConfig& cfg) {
  return [&gm, cfg](Rng& rng) { return generate(gm, standard_normal_vector(rng, gm.dim()), cfg); };
}

void SparsityScanConfig::validate() const {
  if (dims.empty()) throw std::invalid_argument("sparsity scan: dims must be nonempty");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] < 1) throw std::invalid_argument("sparsity scan: dims must be positive");
    if (i > 0 && dims[i] <= dims[i - 1]) {
      throw std::invalid_argument("sparsity scan: dims must be increasing");
    }
  }
  if (m < 1) throw std::invalid_argument("sparsity scan: m must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("sparsity scan: alpha in (0,1)");
  if (!(half_width > 0.0)) throw std::invalid_argument("sparsity scan: half_width must be > 0");
  if (!(dbar_min >= 0.0)) throw std::invalid_argument("sparsity scan: dbar_min must be >= 0");
  if (!(threshold_m > 0.0)) throw std::invalid_argument("sparsity scan: M must be > 0");
  check_count(samples);
  solver.validate();
}

double kernel_width_for_mass(double half_width, double alpha, int n) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const double per_axis = std::pow(alpha, 1.0 / n);
  return half_width / normal_quantile(0.5 * (1.0 + per_axis));
}

std::vector<Vector> scan_centers(int n, int m, double dbar_min) {
  if (n < 1 || m < 1) throw std::invalid_argument("scan_centers: n and m must be >= 1");
  if (m == 1) return {Vector::Constant(n, 0.5)};
  const auto patterns = sign_patterns(n, m);
  int min_hamming = n;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    for (std::size_t j = i + 1; j < patterns.size(); ++j) {
      int d = 0;
      for (int c = 0; c < n; ++c) {
        d += patterns[i][static_cast<std::size_t>(c)] != patterns[j][static_cast<std::size_t>(c)];
      }
      min_hamming = std::min(min_hamming, d);
    }
  }
  const double offset = dbar_min * std::sqrt(static_cast<double>(n)) /
                        (2.0 * std::sqrt(static_cast<double>(min_hamming)));
  std::vector<Vector> centers;
  for (const auto& p : patterns) {
    Vector c(n);
    for (int d = 0; d < n; ++d) c[d] = 0.5 + offset * p[static_cast<std::size_t>(d)];
    centers.push_back(c);
  }
  return centers;
}

std::vector<ScanLevel> sparsity_scan(const SparsityScanConfig& config, unsigned threads) {
  config.validate();
  std::vector<ScanLevel> levels;
  for (int n : config.dims) {
    const auto start = std::chrono::steady_clock::now();
    ScanLevel level;
    level.n = n;
    level.kernel_width = kernel_width_for_mass(config.half_width, config.alpha, n);
    const auto centers = scan_centers(n, config.m, config.dbar_min);
    const std::size_t m = centers.size();
    const NeighborMixture nm(std::vector<double>(m, 1.0 / static_cast<double>(m)), centers,
                             std::vector<double>(m, config.half_width),
                             std::vector<double>(m, level.kernel_width));
    level.min_distance = nm.min_distance();
    level.inside_mass = component_mass_inside_cube(nm, 0);
    level.m0 = m0_threshold(config.dbar_min, nm.kernel_widths(), n);

    const GaussianMixture gm = gaussian_surrogate(nm);
    const PointSampler sampler = uniform_cube_sampler(n, 0.0, 1.0);
    const LogDensityFn log_p = [&gm](const Vector& x) { return log_density(gm, x); };
    const std::uint64_t level_seed = config.seed + 1000003ULL * static_cast<std::uint64_t>(n);
    level.report = estimate_bound(sampler, gm, log_p, config.solver, config.threshold_m,
                                  config.samples, level_seed, GeometricRoute::density, threads);
    level.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    levels.push_back(level);
  }
  return levels;
}

}  // namespace pfode
