#pragma once

#include "pfode/bounds.hpp"
#include "pfode/instability.hpp"
#include "pfode/mixture.hpp"
#include "pfode/ode.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfode {

/// Malformed or incomplete experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Experiment {
  velocity_check,
  grid_instability,
  recon_correlation,
  bound_verify,
  sparsity_scan,
  chi2_tail
};
std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& name);
const std::vector<std::string>& experiment_names();

/// Distribution declared in a config: a Gaussian mixture, or a neighbor
/// mixture whose flows run on its Gaussian surrogate.
struct DistributionSpec {
  std::optional<GaussianMixture> gaussian;
  std::optional<NeighborMixture> neighbor;

  // Mixture that drives the velocity field.
  GaussianMixture flow_mixture() const;
  Eigen::Index dim() const;
  double log_density(const Vector& x) const;
};

struct SamplerSpec {
  enum class Kind { uniform_cube, from_generation } kind = Kind::uniform_cube;
  double low = 0.0;
  double high = 1.0;
};

struct VelocityCheckSpec {
  std::size_t points = 50;
  double t_min = 0.1;
  double t_max = 0.9;
  double box = 2.0;  // x drawn uniformly from [-box, box]^n
};

struct CorrelationSpec {
  std::size_t count = 500;
  int k = 8;
  std::optional<double> magnitude;  // defaults to 1e-3 sqrt(n)
};

struct BoundSpec {
  double m = 2.0;
  std::size_t samples = 1000;
  GeometricRoute route = GeometricRoute::density;
};

struct Chi2Spec {
  std::vector<int> dims{2};
};

struct ExperimentConfig {
  Experiment experiment = Experiment::chi2_tail;
  std::uint64_t seed = 20240501;
  unsigned threads = 1;
  std::string out = ".";

  std::optional<DistributionSpec> distribution;
  SolverConfig inversion_solver;
  SolverConfig generation_solver;
  SamplerSpec sampler;

  VelocityCheckSpec velocity_check;
  GridSpec grid;
  CorrelationSpec correlation;
  BoundSpec bound;
  SparsityScanConfig scan;
  Chi2Spec chi2;

  // Resolved configuration as written into every output file.
  nlohmann::json echo;
};

/// Built-in three-mode mixture in [-1, 1]^2 with a low-density gap between
/// the two upper modes and the lower one.
GaussianMixture default_three_mode_mixture();

DistributionSpec parse_distribution(const nlohmann::json& j);
SolverConfig parse_solver(const nlohmann::json& j);
nlohmann::json solver_to_json(const SolverConfig& cfg);

/// Builds the config for `experiment` from a parsed document; keys absent from
/// the document take their defaults, unknown keys are rejected. The `experiment`
/// key, when present, must agree with the requested experiment.
ExperimentConfig parse_config(const nlohmann::json& doc, Experiment experiment);

/// Reads a JSON config file (throws ConfigError on syntax errors).
nlohmann::json load_config_file(const std::string& path);

}  // namespace pfode
