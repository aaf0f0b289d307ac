#include "pfode/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace pfode {

using nlohmann::json;

namespace {

const std::vector<std::pair<Experiment, std::string>>& experiment_table() {
  static const std::vector<std::pair<Experiment, std::string>> table{
      {Experiment::velocity_check, "velocity-check"},
      {Experiment::grid_instability, "grid-instability"},
      {Experiment::recon_correlation, "recon-correlation"},
      {Experiment::bound_verify, "bound-verify"},
      {Experiment::sparsity_scan, "sparsity-scan"},
      {Experiment::chi2_tail, "chi2-tail"}};
  return table;
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a table");
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require_object(j, where);
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

const json& required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  return j.at(key);
}

template <typename T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": wrong value type");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& target, const std::string& where) {
  if (j.contains(key)) target = get_as<T>(j.at(key), where + "." + key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

std::size_t count_value(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError(where + ": expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

Vector vector_value(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = number(j[i], where);
  }
  return v;
}

Matrix matrix_value(const json& j, Eigen::Index n, const std::string& where) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(n)) {
    throw ConfigError(where + ": expected " + std::to_string(n) + " rows");
  }
  Matrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Vector row = vector_value(j[static_cast<std::size_t>(r)], where);
    if (row.size() != n) throw ConfigError(where + ": ragged covariance row");
    m.row(r) = row.transpose();
  }
  return m;
}

json three_mode_json() {
  return json{{"type", "gaussian-mixture"},
              {"components",
               json::array({json{{"weight", 0.25}, {"mean", {-0.6, 0.7}}, {"variance", 0.0225}},
                            json{{"weight", 0.25}, {"mean", {0.6, 0.7}}, {"variance", 0.0225}},
                            json{{"weight", 0.5}, {"mean", {0.0, -0.7}}, {"variance", 0.0225}}})}};
}

GaussianMixture parse_gaussian_components(const json& comps) {
  if (!comps.is_array() || comps.empty()) {
    throw ConfigError("distribution.components: expected a nonempty array");
  }
  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const std::string where = "distribution.components[" + std::to_string(k) + "]";
    const json& c = comps[k];
    check_keys(c, where, {"weight", "mean", "covariance", "diagonal", "variance"});
    weights.push_back(number(required(c, "weight", where), where + ".weight"));
    means.push_back(vector_value(required(c, "mean", where), where + ".mean"));
    const Eigen::Index n = means.back().size();
    const int forms = static_cast<int>(c.contains("covariance")) +
                      static_cast<int>(c.contains("diagonal")) +
                      static_cast<int>(c.contains("variance"));
    if (forms != 1) {
      throw ConfigError(where + ": give exactly one of covariance, diagonal, variance");
    }
    if (c.contains("covariance")) {
      covs.push_back(matrix_value(c.at("covariance"), n, where + ".covariance"));
    } else if (c.contains("diagonal")) {
      const Vector d = vector_value(c.at("diagonal"), where + ".diagonal");
      if (d.size() != n) throw ConfigError(where + ".diagonal: wrong length");
      covs.push_back(d.asDiagonal());
    } else {
      covs.push_back(number(c.at("variance"), where + ".variance") * Matrix::Identity(n, n));
    }
  }
  return GaussianMixture(std::move(weights), std::move(means), std::move(covs));
}

NeighborMixture parse_neighbor_components(const json& comps) {
  if (!comps.is_array() || comps.empty()) {
    throw ConfigError("distribution.components: expected a nonempty array");
  }
  std::vector<double> weights, half_widths, kernel_widths;
  std::vector<Vector> centers;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const std::string where = "distribution.components[" + std::to_string(k) + "]";
    const json& c = comps[k];
    check_keys(c, where, {"weight", "center", "half_width", "kernel_width"});
    weights.push_back(number(required(c, "weight", where), where + ".weight"));
    centers.push_back(vector_value(required(c, "center", where), where + ".center"));
    half_widths.push_back(number(required(c, "half_width", where), where + ".half_width"));
    kernel_widths.push_back(number(required(c, "kernel_width", where), where + ".kernel_width"));
  }
  return NeighborMixture(std::move(weights), std::move(centers), std::move(half_widths),
                         std::move(kernel_widths));
}

// Wraps library validation errors so they surface as configuration errors.
template <typename F>
auto as_config_error(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

GridAxis axis_from_string(const std::string& s) {
  if (s == "x") return GridAxis::x;
  if (s == "y") return GridAxis::y;
  throw ConfigError("grid.axis: expected 'x' or 'y'");
}

std::string dims_to_string(Eigen::Index n) { return std::to_string(n); }

}  // namespace

std::string to_string(Experiment e) {
  for (const auto& [value, name] : experiment_table()) {
    if (value == e) return name;
  }
  throw std::invalid_argument("unknown experiment");
}

Experiment experiment_from_string(const std::string& name) {
  for (const auto& [value, n] : experiment_table()) {
    if (n == name) return value;
  }
  throw ConfigError("unknown experiment '" + name + "'");
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : experiment_table()) out.push_back(entry.second);
    return out;
  }();
  return names;
}

GaussianMixture DistributionSpec::flow_mixture() const {
  if (gaussian) return *gaussian;
  if (neighbor) return gaussian_surrogate(*neighbor);
  throw std::logic_error("empty distribution");
}

Eigen::Index DistributionSpec::dim() const {
  if (gaussian) return gaussian->dim();
  if (neighbor) return neighbor->dim();
  throw std::logic_error("empty distribution");
}

double DistributionSpec::log_density(const Vector& x) const {
  if (gaussian) return pfode::log_density(*gaussian, x);
  if (neighbor) return neighbor_log_density(*neighbor, x);
  throw std::logic_error("empty distribution");
}

GaussianMixture default_three_mode_mixture() { return *parse_distribution(three_mode_json()).gaussian; }

DistributionSpec parse_distribution(const json& j) {
  require_object(j, "distribution");
  const std::string type = get_as<std::string>(required(j, "type", "distribution"), "distribution.type");
  DistributionSpec spec;
  if (type == "gaussian-mixture") {
    check_keys(j, "distribution", {"type", "components"});
    spec.gaussian = as_config_error("distribution",
                                    [&] { return parse_gaussian_components(required(j, "components", "distribution")); });
  } else if (type == "neighbor-mixture") {
    check_keys(j, "distribution", {"type", "components"});
    spec.neighbor = as_config_error("distribution",
                                    [&] { return parse_neighbor_components(required(j, "components", "distribution")); });
  } else if (type == "standard-normal") {
    check_keys(j, "distribution", {"type", "dim"});
    const std::size_t n = count_value(required(j, "dim", "distribution"), "distribution.dim");
    if (n < 1) throw ConfigError("distribution.dim: must be >= 1");
    spec.gaussian = GaussianMixture::standard_normal(static_cast<Eigen::Index>(n));
  } else {
    throw ConfigError("distribution.type: unknown type '" + type + "'");
  }
  return spec;
}

SolverConfig parse_solver(const json& j) {
  check_keys(j, "solver", {"method", "steps", "abs_tol", "rel_tol", "max_steps"});
  SolverConfig cfg;
  if (j.contains("method")) {
    cfg.method = as_config_error("solver.method", [&] {
      return method_from_string(get_as<std::string>(j.at("method"), "solver.method"));
    });
  }
  if (j.contains("steps")) cfg.steps = static_cast<int>(count_value(j.at("steps"), "solver.steps"));
  if (j.contains("abs_tol")) cfg.abs_tol = number(j.at("abs_tol"), "solver.abs_tol");
  if (j.contains("rel_tol")) cfg.rel_tol = number(j.at("rel_tol"), "solver.rel_tol");
  if (j.contains("max_steps")) cfg.max_steps = count_value(j.at("max_steps"), "solver.max_steps");
  as_config_error("solver", [&] {
    cfg.validate();
    return 0;
  });
  return cfg;
}

json solver_to_json(const SolverConfig& cfg) {
  if (cfg.method == Method::rk45) {
    return json{{"method", "rk45"},
                {"abs_tol", cfg.abs_tol},
                {"rel_tol", cfg.rel_tol},
                {"max_steps", cfg.max_steps}};
  }
  return json{{"method", to_string(cfg.method)}, {"steps", cfg.steps}};
}

ExperimentConfig parse_config(const json& doc, Experiment experiment) {
  check_keys(doc, "config",
             {"experiment", "seed", "threads", "out", "distribution", "solver", "inversion_solver",
              "generation_solver", "sampler", "velocity_check", "grid", "correlation", "bound",
              "scan", "chi2"});
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  if (doc.contains("experiment")) {
    const std::string declared = get_as<std::string>(doc.at("experiment"), "experiment");
    if (experiment_from_string(declared) != experiment) {
      throw ConfigError("experiment: config declares '" + declared + "' but '" +
                        to_string(experiment) + "' was requested");
    }
  }
  read_opt(doc, "seed", cfg.seed, "config");
  read_opt(doc, "threads", cfg.threads, "config");
  read_opt(doc, "out", cfg.out, "config");

  json echo;
  echo["experiment"] = to_string(experiment);

  const bool needs_flow = experiment == Experiment::velocity_check ||
                          experiment == Experiment::grid_instability ||
                          experiment == Experiment::recon_correlation ||
                          experiment == Experiment::bound_verify;

  if (needs_flow) {
    const json dist = doc.contains("distribution") ? doc.at("distribution") : three_mode_json();
    cfg.distribution = parse_distribution(dist);
    echo["distribution"] = dist;

    if (experiment == Experiment::recon_correlation) {
      cfg.inversion_solver = SolverConfig::euler(100);
      cfg.generation_solver = SolverConfig::euler(100);
    }
    if (doc.contains("solver")) {
      cfg.inversion_solver = cfg.generation_solver = parse_solver(doc.at("solver"));
    }
    if (doc.contains("inversion_solver")) cfg.inversion_solver = parse_solver(doc.at("inversion_solver"));
    if (doc.contains("generation_solver")) cfg.generation_solver = parse_solver(doc.at("generation_solver"));
    echo["inversion_solver"] = solver_to_json(cfg.inversion_solver);
    echo["generation_solver"] = solver_to_json(cfg.generation_solver);
  } else if (doc.contains("distribution")) {
    throw ConfigError("distribution: not used by " + to_string(experiment));
  }

  const Eigen::Index n = cfg.distribution ? cfg.distribution->dim() : 0;

  switch (experiment) {
    case Experiment::velocity_check: {
      if (doc.contains("velocity_check")) {
        const json& j = doc.at("velocity_check");
        check_keys(j, "velocity_check", {"points", "t_min", "t_max", "box"});
        auto& v = cfg.velocity_check;
        if (j.contains("points")) v.points = count_value(j.at("points"), "velocity_check.points");
        if (j.contains("t_min")) v.t_min = number(j.at("t_min"), "velocity_check.t_min");
        if (j.contains("t_max")) v.t_max = number(j.at("t_max"), "velocity_check.t_max");
        if (j.contains("box")) v.box = number(j.at("box"), "velocity_check.box");
      }
      const auto& v = cfg.velocity_check;
      if (v.points < 1) throw ConfigError("velocity_check.points: must be >= 1");
      if (!(v.t_min > 0.0 && v.t_min <= v.t_max && v.t_max < 1.0)) {
        throw ConfigError("velocity_check: need 0 < t_min <= t_max < 1");
      }
      if (!(v.box > 0.0)) throw ConfigError("velocity_check.box: must be positive");
      echo["velocity_check"] = json{{"points", v.points}, {"t_min", v.t_min}, {"t_max", v.t_max}, {"box", v.box}};
      break;
    }
    case Experiment::grid_instability: {
      if (n != 2) throw ConfigError("grid-instability: distribution must be 2-dimensional");
      auto& g = cfg.grid;
      if (doc.contains("grid")) {
        const json& j = doc.at("grid");
        check_keys(j, "grid", {"x_min", "x_max", "y_min", "y_max", "nx", "ny", "axis"});
        if (j.contains("x_min")) g.x_min = number(j.at("x_min"), "grid.x_min");
        if (j.contains("x_max")) g.x_max = number(j.at("x_max"), "grid.x_max");
        if (j.contains("y_min")) g.y_min = number(j.at("y_min"), "grid.y_min");
        if (j.contains("y_max")) g.y_max = number(j.at("y_max"), "grid.y_max");
        if (j.contains("nx")) g.nx = static_cast<int>(count_value(j.at("nx"), "grid.nx"));
        if (j.contains("ny")) g.ny = static_cast<int>(count_value(j.at("ny"), "grid.ny"));
        if (j.contains("axis")) g.axis = axis_from_string(get_as<std::string>(j.at("axis"), "grid.axis"));
      }
      if (g.nx < 2 || g.ny < 2) throw ConfigError("grid: nx and ny must be >= 2");
      if (!(g.x_min < g.x_max && g.y_min < g.y_max)) throw ConfigError("grid: empty range");
      echo["grid"] = json{{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min},
                          {"y_max", g.y_max}, {"nx", g.nx},       {"ny", g.ny},
                          {"axis", g.axis == GridAxis::x ? "x" : "y"}};
      break;
    }
    case Experiment::recon_correlation:
    case Experiment::bound_verify: {
      const bool recon = experiment == Experiment::recon_correlation;
      cfg.sampler.low = recon ? -1.0 : 0.0;
      cfg.sampler.high = 1.0;
      if (doc.contains("sampler")) {
        const json& j = doc.at("sampler");
        check_keys(j, "sampler", {"type", "low", "high"});
        const std::string type = get_as<std::string>(required(j, "type", "sampler"), "sampler.type");
        if (type == "uniform-cube") {
          cfg.sampler.kind = SamplerSpec::Kind::uniform_cube;
          if (j.contains("low")) cfg.sampler.low = number(j.at("low"), "sampler.low");
          if (j.contains("high")) cfg.sampler.high = number(j.at("high"), "sampler.high");
          if (!(cfg.sampler.low < cfg.sampler.high)) throw ConfigError("sampler: need low < high");
        } else if (type == "from-generation") {
          if (j.contains("low") || j.contains("high")) {
            throw ConfigError("sampler: bounds apply only to uniform-cube");
          }
          cfg.sampler.kind = SamplerSpec::Kind::from_generation;
        } else {
          throw ConfigError("sampler.type: unknown type '" + type + "'");
        }
      }
      if (cfg.sampler.kind == SamplerSpec::Kind::uniform_cube) {
        echo["sampler"] = json{{"type", "uniform-cube"}, {"low", cfg.sampler.low}, {"high", cfg.sampler.high}};
      } else {
        echo["sampler"] = json{{"type", "from-generation"}};
      }
      echo["seed"] = cfg.seed;
      if (recon) {
        auto& c = cfg.correlation;
        if (doc.contains("correlation")) {
          const json& j = doc.at("correlation");
          check_keys(j, "correlation", {"count", "k", "magnitude"});
          if (j.contains("count")) c.count = count_value(j.at("count"), "correlation.count");
          if (j.contains("k")) c.k = static_cast<int>(count_value(j.at("k"), "correlation.k"));
          if (j.contains("magnitude")) c.magnitude = number(j.at("magnitude"), "correlation.magnitude");
        }
        if (c.count < 3) throw ConfigError("correlation.count: must be >= 3");
        if (c.k < 1) throw ConfigError("correlation.k: must be >= 1");
        const double mag = c.magnitude.value_or(default_magnitude(n));
        if (!(mag > 0.0)) throw ConfigError("correlation.magnitude: must be positive");
        c.magnitude = mag;
        echo["correlation"] = json{{"count", c.count}, {"k", c.k}, {"magnitude", mag}};
      } else {
        auto& b = cfg.bound;
        if (doc.contains("bound")) {
          const json& j = doc.at("bound");
          check_keys(j, "bound", {"M", "samples", "route"});
          if (j.contains("M")) b.m = number(j.at("M"), "bound.M");
          if (j.contains("samples")) b.samples = count_value(j.at("samples"), "bound.samples");
          if (j.contains("route")) {
            b.route = as_config_error("bound.route", [&] {
              return route_from_string(get_as<std::string>(j.at("route"), "bound.route"));
            });
          }
        }
        if (!(b.m > 0.0)) throw ConfigError("bound.M: must be positive");
        if (b.samples < 100) throw ConfigError("bound.samples: must be >= 100");
        if (b.route == GeometricRoute::jacobian && n > 16) {
          throw ConfigError("bound.route: jacobian route requires n <= 16, got n=" + dims_to_string(n));
        }
        echo["bound"] = json{{"M", b.m}, {"samples", b.samples}, {"route", to_string(b.route)}};
      }
      break;
    }
    case Experiment::sparsity_scan: {
      auto& s = cfg.scan;
      s.seed = cfg.seed;
      if (doc.contains("scan")) {
        const json& j = doc.at("scan");
        check_keys(j, "scan", {"dims", "m", "dbar_min", "half_width", "alpha", "M", "samples", "solver"});
        if (j.contains("dims")) {
          const json& d = j.at("dims");
          if (!d.is_array()) throw ConfigError("scan.dims: expected an array");
          s.dims.clear();
          for (const json& v : d) s.dims.push_back(static_cast<int>(count_value(v, "scan.dims")));
        }
        if (j.contains("m")) s.m = static_cast<int>(count_value(j.at("m"), "scan.m"));
        if (j.contains("dbar_min")) s.dbar_min = number(j.at("dbar_min"), "scan.dbar_min");
        if (j.contains("half_width")) s.half_width = number(j.at("half_width"), "scan.half_width");
        if (j.contains("alpha")) s.alpha = number(j.at("alpha"), "scan.alpha");
        if (j.contains("M")) s.threshold_m = number(j.at("M"), "scan.M");
        if (j.contains("samples")) s.samples = count_value(j.at("samples"), "scan.samples");
        if (j.contains("solver")) s.solver = parse_solver(j.at("solver"));
      }
      if (doc.contains("solver")) s.solver = parse_solver(doc.at("solver"));
      as_config_error("scan", [&] {
        s.validate();
        return 0;
      });
      echo["seed"] = cfg.seed;
      echo["scan"] = json{{"dims", s.dims},
                          {"m", s.m},
                          {"dbar_min", s.dbar_min},
                          {"half_width", s.half_width},
                          {"alpha", s.alpha},
                          {"M", s.threshold_m},
                          {"samples", s.samples},
                          {"solver", solver_to_json(s.solver)}};
      break;
    }
    case Experiment::chi2_tail: {
      if (doc.contains("chi2")) {
        const json& j = doc.at("chi2");
        check_keys(j, "chi2", {"dims"});
        if (j.contains("dims")) {
          const json& d = j.at("dims");
          if (!d.is_array() || d.empty()) throw ConfigError("chi2.dims: expected a nonempty array");
          cfg.chi2.dims.clear();
          for (const json& v : d) {
            const auto dim = static_cast<int>(count_value(v, "chi2.dims"));
            if (dim < 1) throw ConfigError("chi2.dims: entries must be >= 1");
            cfg.chi2.dims.push_back(dim);
          }
        }
      }
      echo["chi2"] = json{{"dims", cfg.chi2.dims}};
      break;
    }
  }

  // Tables belonging to other experiments are rejected so a typo in the
  // experiment name cannot silently ignore settings.
  const std::vector<std::pair<const char*, Experiment>> owners{
      {"velocity_check", Experiment::velocity_check}, {"grid", Experiment::grid_instability},
      {"correlation", Experiment::recon_correlation}, {"bound", Experiment::bound_verify},
      {"scan", Experiment::sparsity_scan},            {"chi2", Experiment::chi2_tail}};
  for (const auto& [key, owner] : owners) {
    if (doc.contains(key) && owner != experiment) {
      throw ConfigError(std::string(key) + ": not used by " + to_string(experiment));
    }
  }
  if (doc.contains("sampler") && experiment != Experiment::recon_correlation &&
      experiment != Experiment::bound_verify) {
    throw ConfigError("sampler: not used by " + to_string(experiment));
  }
  if (!needs_flow && (doc.contains("solver") && experiment != Experiment::sparsity_scan)) {
    throw ConfigError("solver: not used by " + to_string(experiment));
  }
  if (!needs_flow && (doc.contains("inversion_solver") || doc.contains("generation_solver"))) {
    throw ConfigError("inversion_solver/generation_solver: not used by " + to_string(experiment));
  }
  if (experiment == Experiment::velocity_check || experiment == Experiment::grid_instability ||
      experiment == Experiment::recon_correlation) {
    echo["seed"] = cfg.seed;
  }
  cfg.echo = std::move(echo);
  return cfg;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config '" + path + "': " + e.what());
  }
}

}  // namespace pfode
