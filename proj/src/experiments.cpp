#include "pfode/experiments.hpp"

#include "pfode/bounds.hpp"
#include "pfode/instability.hpp"
#include "pfode/output.hpp"
#include "pfode/parallel.hpp"
#include "pfode/recon.hpp"
#include "pfode/special.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace pfode {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

json metadata(unsigned threads, Clock::time_point start) {
  return json{{"timestamp", utc_timestamp()},
              {"threads", threads},
              {"wall_seconds", seconds_since(start)}};
}

std::vector<std::string> indexed(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> names;
  for (Eigen::Index i = 1; i <= n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_text(const std::optional<double>& v) {
  return v ? short_scientific(*v) : std::string("n/a");
}

double log_marginal(const GaussianMixture& gm, const Vector& x, double t) {
  return log_density(marginal_at_time(gm, t).law, x);
}

std::string run_velocity_check(const ExperimentConfig& cfg, unsigned threads,
                               const std::filesystem::path& out) {
  const auto start = Clock::now();
  const GaussianMixture gm = cfg.distribution->flow_mixture();
  const Eigen::Index n = gm.dim();
  const auto& spec = cfg.velocity_check;

  struct Row {
    double t = 0.0;
    Vector x;
    double residual = 0.0;
    double jac_error = 0.0;
  };
  std::vector<Row> rows(spec.points);
  parallel_for(spec.points, threads, [&](std::size_t i) {
    Rng rng = make_stream(cfg.seed, i);
    Row r;
    r.x = uniform_vector(rng, n, -spec.box, spec.box);
    r.t = std::uniform_real_distribution<double>(spec.t_min, spec.t_max)(rng);
    r.residual = continuity_residual(gm, r.x, r.t);
    r.jac_error = jacobian_fd_error(gm, r.x, r.t);
    rows[i] = std::move(r);
  });

  auto header = std::vector<std::string>{"index", "t"};
  for (auto& name : indexed("x", n)) header.push_back(name);
  header.push_back("continuity_residual");
  header.push_back("jacobian_rel_error");
  CsvWriter csv(out / "velocity_check.csv", header);
  double max_residual = 0.0, max_jac = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> cells{std::to_string(i), format_double(rows[i].t)};
    for (Eigen::Index d = 0; d < n; ++d) cells.push_back(format_double(rows[i].x[d]));
    cells.push_back(format_double(rows[i].residual));
    cells.push_back(format_double(rows[i].jac_error));
    csv.write_row(cells);
    max_residual = std::max(max_residual, rows[i].residual);
    max_jac = std::max(max_jac, rows[i].jac_error);
  }
  csv.close();

  json doc{{"config", cfg.echo},
           {"points", rows.size()},
           {"max_continuity_residual", max_residual},
           {"max_jacobian_rel_error", max_jac}};
  write_json(out / "velocity_check.json", doc, metadata(threads, start));
  return "velocity-check: points=" + std::to_string(rows.size()) +
         " max_continuity_residual=" + short_scientific(max_residual) +
         " max_jacobian_rel_error=" + short_scientific(max_jac);
}

std::string run_grid(const ExperimentConfig& cfg, unsigned threads,
                     const std::filesystem::path& out) {
  const auto start = Clock::now();
  const GaussianMixture gm = cfg.distribution->flow_mixture();
  const GridMap map = grid_intrinsic_map(gm, cfg.grid, cfg.generation_solver, threads);
  const bool along_y = map.axis == GridAxis::y;

  // Row r, column c holds the pair starting at node (x_c, y_r).
  std::vector<std::string> header{"y"};
  for (Eigen::Index c = 0; c < map.coefficients.cols(); ++c) {
    header.push_back(format_double(map.xs[static_cast<std::size_t>(c)]));
  }
  CsvWriter csv(out / "grid.csv", header);
  std::size_t above_one = 0;
  double max_coefficient = 0.0;
  for (Eigen::Index r = 0; r < map.coefficients.rows(); ++r) {
    std::vector<std::string> cells{format_double(map.ys[static_cast<std::size_t>(r)])};
    for (Eigen::Index c = 0; c < map.coefficients.cols(); ++c) {
      const double value = map.coefficients(r, c);
      cells.push_back(format_double(value));
      above_one += value > 1.0;
      max_coefficient = std::max(max_coefficient, value);
    }
    csv.write_row(cells);
  }
  csv.close();

  const double cells = static_cast<double>(map.coefficients.size());
  json doc{{"config", cfg.echo},
           {"axis", along_y ? "y" : "x"},
           {"rows", map.coefficients.rows()},
           {"cols", map.coefficients.cols()},
           {"max_coefficient", max_coefficient},
           {"fraction_above_one", static_cast<double>(above_one) / cells}};
  write_json(out / "grid.json", doc, metadata(threads, start));
  return "grid-instability: cells=" + std::to_string(map.coefficients.size()) +
         " max_coefficient=" + short_scientific(max_coefficient) +
         " fraction_above_one=" + short_scientific(static_cast<double>(above_one) / cells);
}

PointSampler make_sampler(const ExperimentConfig& cfg, const GaussianMixture& gm) {
  if (cfg.sampler.kind == SamplerSpec::Kind::from_generation) {
    return generation_sampler(gm, cfg.generation_solver);
  }
  return uniform_cube_sampler(gm.dim(), cfg.sampler.low, cfg.sampler.high);
}

std::string run_correlation(const ExperimentConfig& cfg, unsigned threads,
                            const std::filesystem::path& out) {
  const auto start = Clock::now();
  const GaussianMixture gm = cfg.distribution->flow_mixture();
  const Eigen::Index n = gm.dim();
  const auto& spec = cfg.correlation;
  const CorrelationResult result =
      correlation_experiment(gm, make_sampler(cfg, gm), spec.count, cfg.inversion_solver,
                             cfg.generation_solver, spec.k, *spec.magnitude, cfg.seed, threads);

  auto header = std::vector<std::string>{"index"};
  for (auto& name : indexed("x", n)) header.push_back(name);
  for (auto& name : indexed("z", n)) header.push_back(name);
  header.push_back("reconstruction_error");
  header.push_back("mean_coefficient");
  for (auto& name : indexed("coefficient_", spec.k)) header.push_back(name);
  CsvWriter csv(out / "records.csv", header);
  for (const CorrelationRecord& r : result.records) {
    std::vector<std::string> cells{std::to_string(r.index)};
    for (Eigen::Index d = 0; d < n; ++d) cells.push_back(format_double(r.initial_point[d]));
    for (Eigen::Index d = 0; d < n; ++d) cells.push_back(format_double(r.inverted_noise[d]));
    cells.push_back(format_double(r.reconstruction_error));
    cells.push_back(format_double(r.mean_realized_coefficient));
    for (double c : r.coefficients) cells.push_back(format_double(c));
    csv.write_row(cells);
  }
  csv.close();

  json doc{{"config", cfg.echo},
           {"records", result.records.size()},
           {"failed", result.failed},
           {"degenerate", result.degenerate},
           {"pearson", optional_number(result.pearson)},
           {"spearman", optional_number(result.spearman)},
           {"permutation_spearman", optional_number(result.permutation_spearman)}};
  write_json(out / "summary.json", doc, metadata(threads, start));
  return "recon-correlation: records=" + std::to_string(result.records.size()) +
         " failed=" + std::to_string(result.failed) +
         " spearman=" + optional_text(result.spearman) +
         " pearson=" + optional_text(result.pearson) +
         " permutation_spearman=" + optional_text(result.permutation_spearman);
}

json proportion_json(const Proportion& p) {
  return json{{"estimate", p.estimate}, {"ci_half_width", p.ci_half_width}, {"hits", p.hits}};
}

std::string run_bound(const ExperimentConfig& cfg, unsigned threads,
                      const std::filesystem::path& out) {
  const auto start = Clock::now();
  const DistributionSpec& dist = *cfg.distribution;
  const GaussianMixture gm = dist.flow_mixture();
  const LogDensityFn log_p = [&dist](const Vector& x) { return dist.log_density(x); };
  const BoundReport r =
      estimate_bound(make_sampler(cfg, gm), gm, log_p, cfg.inversion_solver, cfg.bound.m,
                     cfg.bound.samples, cfg.seed, cfg.bound.route, threads);

  json doc{{"config", cfg.echo},
           {"n", r.n},
           {"M", r.m},
           {"samples", r.sample_count},
           {"eps_hat", r.eps.estimate},
           {"eps_ci", r.eps.ci_half_width},
           {"delta_hat", r.delta.estimate},
           {"delta_ci", r.delta.ci_half_width},
           {"p_hat", r.p.estimate},
           {"p_ci", r.p.ci_half_width},
           {"lower_bound", r.lower_bound},
           {"margin", r.margin},
           {"bound_ok", r.inequality_satisfied},
           {"epsilon_threshold", epsilon_threshold(r.n, r.m)},
           {"norm_threshold", norm_threshold(r.n)}};
  write_json(out / "bound.json", doc, metadata(threads, start));
  return "bound-verify: n=" + std::to_string(r.n) + " M=" + short_scientific(r.m) +
         " p_hat=" + short_scientific(r.p.estimate) + "+-" + short_scientific(r.p.ci_half_width) +
         " eps_hat=" + short_scientific(r.eps.estimate) +
         " delta_hat=" + short_scientific(r.delta.estimate) +
         " bound_ok=" + (r.inequality_satisfied ? "true" : "false");
}

std::string run_scan(const ExperimentConfig& cfg, unsigned threads,
                     const std::filesystem::path& out) {
  const auto start = Clock::now();
  const std::vector<ScanLevel> levels = sparsity_scan(cfg.scan, threads);

  CsvWriter csv(out / "scan.csv", {"n", "w", "eps_hat", "eps_ci", "delta_hat", "delta_ci", "p_hat",
                                   "p_ci", "M0", "bound_ok"});
  json rows = json::array();
  json level_seconds = json::array();
  for (const ScanLevel& l : levels) {
    const BoundReport& r = l.report;
    csv.write_row({std::to_string(l.n), format_double(l.kernel_width),
                   format_double(r.eps.estimate), format_double(r.eps.ci_half_width),
                   format_double(r.delta.estimate), format_double(r.delta.ci_half_width),
                   format_double(r.p.estimate), format_double(r.p.ci_half_width),
                   format_double(l.m0), r.inequality_satisfied ? "true" : "false"});
    rows.push_back(json{{"n", l.n},
                        {"w", l.kernel_width},
                        {"min_distance", l.min_distance},
                        {"inside_mass", l.inside_mass},
                        {"M0", l.m0},
                        {"eps", proportion_json(r.eps)},
                        {"delta", proportion_json(r.delta)},
                        {"p", proportion_json(r.p)},
                        {"lower_bound", r.lower_bound},
                        {"margin", r.margin},
                        {"bound_ok", r.inequality_satisfied}});
    level_seconds.push_back(l.wall_seconds);
  }
  csv.close();

  json meta = metadata(threads, start);
  meta["level_wall_seconds"] = level_seconds;
  write_json(out / "scan.json", json{{"config", cfg.echo}, {"levels", rows}}, meta);

  std::ostringstream line;
  line << "sparsity-scan:";
  for (const ScanLevel& l : levels) {
    line << " n=" << l.n << "(eps=" << short_scientific(l.report.eps.estimate)
         << " delta=" << short_scientific(l.report.delta.estimate)
         << " p=" << short_scientific(l.report.p.estimate) << ")";
  }
  line << " M0(n=" << levels.back().n << ")=" << short_scientific(levels.back().m0);
  return line.str();
}

std::string run_chi2(const ExperimentConfig& cfg, unsigned threads,
                     const std::filesystem::path& out) {
  const auto start = Clock::now();
  CsvWriter csv(out / "chi2.csv", {"n", "threshold", "tail"});
  json rows = json::array();
  std::ostringstream line;
  line << "chi2-tail:";
  for (int n : cfg.chi2.dims) {
    const double tail = chi_square_tail(n);
    csv.write_row({std::to_string(n), format_double(norm_threshold(n)), format_double(tail)});
    rows.push_back(json{{"n", n}, {"threshold", norm_threshold(n)}, {"tail", tail}});
    line << " n=" << n << " tail=" << short_scientific(tail);
  }
  csv.close();
  write_json(out / "chi2.json", json{{"config", cfg.echo}, {"tails", rows}},
             metadata(threads, start));
  return line.str();
}

}  // namespace

double continuity_residual(const GaussianMixture& gm, const Vector& x, double t, double step) {
  if (!(t - step > 0.0 && t + step < 1.0)) {
    throw std::invalid_argument("continuity_residual: t must lie strictly inside (0, 1)");
  }
  const double dt = (log_marginal(gm, x, t + step) - log_marginal(gm, x, t - step)) / (2.0 * step);
  const GaussianMixture law = marginal_at_time(gm, t).law;
  const FieldValue f = evaluate_field(gm, x, t, true);
  double transport = 0.0;
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = log_density(law, probe);
    probe[i] = x[i] - step;
    const double down = log_density(law, probe);
    probe[i] = x[i];
    transport += (up - down) / (2.0 * step) * f.velocity[i];
  }
  return std::abs(dt + transport + f.jacobian.trace());
}

double jacobian_fd_error(const GaussianMixture& gm, const Vector& x, double t, double step) {
  const Matrix analytic = velocity_jacobian(gm, x, t);
  Matrix numeric(x.size(), x.size());
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + step;
    const Vector up = velocity(gm, probe, t);
    probe[j] = x[j] - step;
    const Vector down = velocity(gm, probe, t);
    probe[j] = x[j];
    numeric.col(j) = (up - down) / (2.0 * step);
  }
  return (analytic - numeric).norm() / std::max(analytic.norm(), 1e-12);
}

std::string short_scientific(double value) {
  if (!std::isfinite(value)) return format_double(value);
  if (value == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4e", value);
  std::string s(buf);
  const auto e = s.find('e');
  std::string mantissa = s.substr(0, e);
  int exponent = std::stoi(s.substr(e + 1));
  if (exponent == 0) return mantissa;
  return mantissa + "e" + std::to_string(exponent);
}

std::string run_experiment(const ExperimentConfig& cfg, unsigned threads,
                           const std::filesystem::path& out) {
  prepare_output_directory(out);
  switch (cfg.experiment) {
    case Experiment::velocity_check: return run_velocity_check(cfg, threads, out);
    case Experiment::grid_instability: return run_grid(cfg, threads, out);
    case Experiment::recon_correlation: return run_correlation(cfg, threads, out);
    case Experiment::bound_verify: return run_bound(cfg, threads, out);
    case Experiment::sparsity_scan: return run_scan(cfg, threads, out);
    case Experiment::chi2_tail: return run_chi2(cfg, threads, out);
  }
  throw std::logic_error("unhandled experiment");
}

}  // namespace pfode
