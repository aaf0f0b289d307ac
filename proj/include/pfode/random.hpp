#pragma once

#include "pfode/types.hpp"

#include <cstdint>
#include <random>

namespace pfode {

using Rng = std::mt19937_64;

// Independent generator for work item `index` under `seed`. Every per-sample
// computation draws from its own stream so results do not depend on the
// order or parallelism of evaluation.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

inline Vector standard_normal_vector(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

inline Vector uniform_vector(Rng& rng, Eigen::Index n, double low, double high) {
  std::uniform_real_distribution<double> uniform(low, high);
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = uniform(rng);
  return out;
}

inline Vector random_unit_vector(Rng& rng, Eigen::Index n) {
  Vector u = standard_normal_vector(rng, n);
  while (u.norm() == 0.0) u = standard_normal_vector(rng, n);
  return u / u.norm();
}

}  // namespace pfode
