// Acceptance suite: one line per criterion, exit status 1 if any fails.
#include "fixtures.hpp"
#include "oracles.hpp"

#include "pfode/bounds.hpp"
#include "pfode/config.hpp"
#include "pfode/instability.hpp"
#include "pfode/mixture.hpp"
#include "pfode/ode.hpp"
#include "pfode/recon.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

using namespace pfode;
using fixtures::vec;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

const SolverConfig kTight = SolverConfig::rk45(1e-12, 1e-12);

// 1. Identity flow on the standard Gaussian in eight dimensions.
Outcome identity_flow() {
  const auto gm = GaussianMixture::standard_normal(8);
  const SolverConfig cfg;
  double worst_r = 0.0, worst_g = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    Rng rng = make_stream(101, i);
    const Vector x = uniform_vector(rng, 8, -1.0, 1.0);
    const Reconstruction rec = reconstruct(gm, x, cfg, cfg);
    worst_r = std::max(worst_r, reconstruction_error(x, rec.reconstructed));
    const Matrix j = integrate_with_jacobian(gm, rec.inverted_noise, 1.0, 0.0, cfg).jacobian;
    worst_g = std::max(worst_g, std::abs(geometric_average_via_jacobian(j) - 1.0));
  }
  return {worst_r <= 1e-6 && worst_g <= 1e-4,
          "max R=" + fmt(worst_r) + " (<=1e-6), max |E-1|=" + fmt(worst_g) + " (<=1e-4)"};
}

// 2. Closed-form velocity against conditional-expectation quadrature.
Outcome velocity_correctness() {
  double worst_v = 0.0, worst_j = 0.0;
  const auto gm1 = fixtures::bimodal_1d();
  const auto gm2 = fixtures::bimodal_2d();
  for (std::size_t i = 0; i < 20; ++i) {
    Rng rng = make_stream(102, i);
    const bool one_d = i < 10;
    const GaussianMixture& gm = one_d ? gm1 : gm2;
    const Vector x = uniform_vector(rng, gm.dim(), -1.5, 1.5);
    const double t = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const Vector ref = one_d ? oracle::velocity_quadrature(gm, x, t, 1e-3)
                             : oracle::velocity_quadrature(gm, x, t, 0.01, 3.0);
    worst_v = std::max(worst_v, (velocity(gm, x, t) - ref).lpNorm<Eigen::Infinity>());
    const double step = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, x.norm());
    const Matrix fd = oracle::finite_difference_jacobian([&](const Vector& p) { return velocity(gm, p, t); }, x, step);
    const Matrix jac = velocity_jacobian(gm, x, t);
    worst_j = std::max(worst_j, (jac - fd).norm() / jac.norm());
  }
  return {worst_v <= 1e-6 && worst_j <= 1e-5,
          "max |v - quadrature|=" + fmt(worst_v) + " (<=1e-6), max Jacobian rel err=" + fmt(worst_j) + " (<=1e-5)"};
}

// 3. Continuity equation with an independently assembled marginal density.
Outcome continuity_equation() {
  double worst = 0.0;
  const std::vector<GaussianMixture> mixtures{fixtures::mild_2d(), fixtures::bimodal_2d(), fixtures::sparse_2d()};
  auto log_marginal = [](const GaussianMixture& gm, const Vector& x, double t) {
    std::vector<oracle::Component> comps = oracle::components_of(gm);
    for (std::size_t k = 0; k < comps.size(); ++k) {
      const Matrix cov = (1 - t) * (1 - t) * gm.covariance(k) + t * t * Matrix::Identity(gm.dim(), gm.dim());
      const Eigen::FullPivLU<Matrix> lu(cov);
      comps[k].mean = (1 - t) * gm.mean(k);
      comps[k].precision = lu.inverse();
      comps[k].log_norm = -0.5 * (gm.dim() * std::log(2 * std::numbers::pi) + std::log(lu.determinant()));
    }
    return oracle::log_mixture_density(comps, x);
  };
  const double h = 1e-5;
  for (std::size_t i = 0; i < 50; ++i) {
    Rng rng = make_stream(103, i);
    const GaussianMixture& gm = mixtures[i % mixtures.size()];
    const Vector x = uniform_vector(rng, 2, -1.5, 1.5);
    const double t = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    const double dt = (log_marginal(gm, x, t + h) - log_marginal(gm, x, t - h)) / (2 * h);
    const Vector v = velocity(gm, x, t);
    double transport = 0.0, div = 0.0;
    for (Eigen::Index d = 0; d < 2; ++d) {
      Vector up = x, down = x;
      up[d] += h;
      down[d] -= h;
      transport += (log_marginal(gm, up, t) - log_marginal(gm, down, t)) / (2 * h) * v[d];
      div += (velocity(gm, up, t)[d] - velocity(gm, down, t)[d]) / (2 * h);
    }
    worst = std::max(worst, std::abs(dt + transport + div));
  }
  return {worst <= 1e-4, "max |d_t p + div(p v)| / p=" + fmt(worst) + " (<=1e-4)"};
}

// 4. Determinant identity three ways.
Outcome determinant_identity() {
  const auto gm = fixtures::bimodal_2d();
  const auto comps = oracle::components_of(gm);
  double worst = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    Rng rng = make_stream(104, i);
    const Vector z = standard_normal_vector(rng, 2);
    const double det = std::abs(integrate_with_jacobian(gm, z, 1.0, 0.0, kTight).jacobian.determinant());
    const FlowDivergence fd = integrate_with_divergence(gm, z, 1.0, 0.0, kTight);
    const double via_div = std::exp(fd.divergence_integral);
    const double via_density = std::exp(oracle::log_std_normal(z) - oracle::log_mixture_density(comps, fd.state));
    worst = std::max({worst, std::abs(det - via_div) / det, std::abs(det - via_density) / det,
                      std::abs(via_div - via_density) / via_div});
  }
  return {worst <= 1e-3, "max pairwise relative gap=" + fmt(worst) + " (<=1e-3)"};
}

// 5. Convergence orders of the fixed-step methods.
Outcome solver_orders() {
  const auto gm = fixtures::mild_2d();
  const Vector z = vec({0.6, -0.9});
  const Vector reference = generate(gm, z, SolverConfig::rk45(1e-13, 1e-13));
  const std::vector<int> steps{25, 50, 100, 200, 400};
  std::vector<double> e_err, h_err;
  for (int s : steps) {
    e_err.push_back((generate(gm, z, SolverConfig::euler(s)) - reference).norm());
    h_err.push_back((generate(gm, z, SolverConfig::heun(s)) - reference).norm());
  }
  const double euler = oracle::convergence_order(steps, e_err);
  const double heun = oracle::convergence_order(steps, h_err);
  return {std::abs(euler - 1.0) <= 0.3 && std::abs(heun - 2.0) <= 0.3,
          "Euler slope=" + fmt(euler) + " (1+-0.3), Heun slope=" + fmt(heun) + " (2+-0.3)"};
}

// 6. Constructive instability search.
Outcome instability_construction() {
  const auto gm = fixtures::sparse_2d();
  int achieved = 0, unstable = 0, unstable_found = 0;
  double worst_ratio = 1e300;
  for (std::size_t i = 0; i < 20; ++i) {
    Rng rng = make_stream(106, i);
    const Vector z = standard_normal_vector(rng, 2);
    const InstabilityEffect e = verify_instability_effect(gm, z, 0.1, kTight);
    achieved += e.success;
    worst_ratio = std::min(worst_ratio, e.realized * 1.1 / e.intrinsic);
    if (e.intrinsic > 1.1) {
      ++unstable;
      unstable_found += e.success && e.realized > 1.0;
    }
  }
  return {achieved == 20 && unstable_found == unstable,
          "A>=E/1.1 at " + std::to_string(achieved) + "/20 points (min A*1.1/E=" + fmt(worst_ratio) +
              "), A>1 at " + std::to_string(unstable_found) + "/" + std::to_string(unstable) +
              " points with E>1.1"};
}

// 7. Grid map between modes.
Outcome grid_map() {
  const auto gm = fixtures::sparse_2d();
  const GridSpec grid;  // 201 x 201 on [-1, 1]^2, y-axis differences
  const SolverConfig cfg;
  const GridMap map = grid_intrinsic_map(gm, grid, cfg);
  const Eigen::Index rows = map.coefficients.rows(), cols = map.coefficients.cols();

  // Mode label of every generated node: nearest component mean.
  std::vector<std::vector<int>> label(static_cast<std::size_t>(grid.ny), std::vector<int>(static_cast<std::size_t>(grid.nx)));
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const Vector g = generate(gm, vec({map.xs[static_cast<std::size_t>(i)], map.ys[static_cast<std::size_t>(j)]}), cfg);
      int best = 0;
      for (std::size_t k = 1; k < gm.size(); ++k) {
        if ((g - gm.mean(k)).norm() < (g - gm.mean(static_cast<std::size_t>(best))).norm()) best = static_cast<int>(k);
      }
      label[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = best;
    }
  }

  // Largest 4-connected component of cells above one.
  std::vector<int> comp(static_cast<std::size_t>(rows * cols), -1);
  int best_id = -1;
  std::size_t best_size = 0;
  int next_id = 0;
  for (Eigen::Index start = 0; start < rows * cols; ++start) {
    const Eigen::Index r0 = start / cols, c0 = start % cols;
    if (comp[static_cast<std::size_t>(start)] >= 0 || map.coefficients(r0, c0) <= 1.0) continue;
    std::size_t size = 0;
    std::queue<Eigen::Index> q;
    q.push(start);
    comp[static_cast<std::size_t>(start)] = next_id;
    while (!q.empty()) {
      const Eigen::Index cell = q.front();
      q.pop();
      ++size;
      const Eigen::Index r = cell / cols, c = cell % cols;
      const Eigen::Index nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& p : nb) {
        if (p[0] < 0 || p[0] >= rows || p[1] < 0 || p[1] >= cols) continue;
        const Eigen::Index id = p[0] * cols + p[1];
        if (comp[static_cast<std::size_t>(id)] < 0 && map.coefficients(p[0], p[1]) > 1.0) {
          comp[static_cast<std::size_t>(id)] = next_id;
          q.push(id);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best_id = next_id;
    }
    ++next_id;
  }

  // The band lies between modes if it contains the pair straddling each mode
  // switch along y.
  int switches = 0, covered = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (label[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] !=
          label[static_cast<std::size_t>(r + 1)][static_cast<std::size_t>(c)]) {
        ++switches;
        covered += comp[static_cast<std::size_t>(r * cols + c)] == best_id;
      }
    }
  }
  const double share = static_cast<double>(best_size) / static_cast<double>(rows * cols);
  const double switch_cover = switches ? static_cast<double>(covered) / switches : 0.0;

  const GridMap flat = grid_intrinsic_map(GaussianMixture::standard_normal(2), grid, cfg);
  const double flat_dev = (flat.coefficients.array() - 1.0).abs().maxCoeff();

  const bool pass = share >= 0.01 && switches > 0 && switch_cover >= 0.9 && flat_dev <= 1e-4;
  return {pass, "largest band=" + fmt(100 * share) + "% of cells (>=1%), covers " + std::to_string(covered) + "/" +
                    std::to_string(switches) + " mode switches (>=90%), max coefficient=" +
                    fmt(map.coefficients.maxCoeff()) + "; N(0,I) max |E-1|=" + fmt(flat_dev) + " (<=1e-4)"};
}

// 8. Reconstruction error tracks the instability coefficient.
Outcome correlation() {
  const auto gm = fixtures::sparse_2d();
  const auto euler = SolverConfig::euler(100);
  const CorrelationResult r = correlation_experiment(gm, uniform_cube_sampler(2, -1.0, 1.0), 500, euler, euler, 8,
                                                     default_magnitude(2), 20240501);
  if (!r.spearman || !r.permutation_spearman) return {false, "degenerate correlation"};
  return {*r.spearman > 0.5 && std::abs(*r.permutation_spearman) < 0.2,
          "Spearman=" + fmt(*r.spearman) + " (>0.5), permutation Spearman=" + fmt(*r.permutation_spearman) +
              " (|.|<0.2), Pearson=" + fmt(r.pearson.value_or(NAN)) + ", records=" + std::to_string(r.records.size())};
}

// 9. Monte Carlo check of the probability lower bound.
Outcome lower_bound() {
  const auto cube = uniform_cube_sampler(2, 0.0, 1.0);
  const auto std2 = GaussianMixture::standard_normal(2);
  const auto sparse = fixtures::sparse_2d();
  const LogDensityFn lp_std = [&](const Vector& x) { return log_density(std2, x); };
  const LogDensityFn lp_sparse = [&](const Vector& x) { return log_density(sparse, x); };
  const BoundReport a = estimate_bound(cube, std2, lp_std, SolverConfig{}, 0.99, 1000, 109, GeometricRoute::density);
  const BoundReport b = estimate_bound(cube, std2, lp_std, SolverConfig{}, 1.01, 1000, 109, GeometricRoute::density);
  const BoundReport c = estimate_bound(cube, sparse, lp_sparse, SolverConfig{}, 2.0, 1000, 109, GeometricRoute::density);
  const bool pass = a.p.estimate == 1.0 && b.p.estimate == 0.0 && a.inequality_satisfied &&
                    b.inequality_satisfied && c.inequality_satisfied;
  auto line = [](const BoundReport& r) {
    return "P=" + fmt(r.p.estimate) + " >= 1-" + fmt(r.eps.estimate) + "-" + fmt(r.delta.estimate) + "-" +
           fmt(r.margin) + ": " + (r.inequality_satisfied ? "holds" : "violated");
  };
  return {pass, "N(0,I) M=0.99 " + line(a) + "; N(0,I) M=1.01 " + line(b) + "; sparse M=2 " + line(c)};
}

// 10. Norm exceedance of inverted generated samples.
Outcome delta_closed_form() {
  const auto gm = fixtures::sparse_2d();
  const SolverConfig cfg;
  const Proportion d = delta_hat(generation_sampler(gm, cfg), gm, cfg, 100000, 110);
  const double expected = std::exp(-5.0);
  const double sigma = std::sqrt(expected * (1 - expected) / d.total);
  return {std::abs(d.estimate - expected) <= 3 * sigma,
          "delta=" + fmt(d.estimate) + " vs e^-5=" + fmt(expected) + " (3 sigma=" + fmt(3 * sigma) + ")"};
}

// 11. Chi-square tail against Gaussian samples.
Outcome chi_square() {
  bool pass = true;
  std::string detail;
  for (int n : {2, 8}) {
    Rng rng(111 + static_cast<std::uint64_t>(n));
    std::normal_distribution<double> normal;
    const double thr = norm_threshold(n);
    const std::size_t count = 1000000;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < count; ++i) {
      double s = 0.0;
      for (int d = 0; d < n; ++d) {
        const double g = normal(rng);
        s += g * g;
      }
      hits += s > thr;
    }
    const double tail = chi_square_tail(n);
    const double emp = static_cast<double>(hits) / count;
    const double sigma = std::sqrt(tail * (1 - tail) / count);
    pass = pass && std::abs(emp - tail) <= 3 * sigma;
    detail += "n=" + std::to_string(n) + ": tail=" + fmt(tail) + " empirical=" + fmt(emp) + " (3 sigma=" + fmt(3 * sigma) + ") ";
  }
  return {pass, detail};
}

// At most one step against the expected direction, and that one within the
// combined confidence half-widths.
bool trend_ok(const std::vector<Proportion>& seq, bool non_increasing) {
  int bad = 0;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const double step = seq[i].estimate - seq[i - 1].estimate;
    const double wrong = non_increasing ? step : -step;
    if (wrong > 0.0) {
      if (wrong > seq[i].ci_half_width + seq[i - 1].ci_half_width) return false;
      ++bad;
    }
  }
  return bad <= 1;
}

// 12. Sparsity scaling trend.
Outcome sparsity_trend() {
  SparsityScanConfig cfg;
  cfg.dims = {2, 4, 8, 16};
  cfg.m = 4;
  cfg.threshold_m = 1.5;
  cfg.samples = 2000;
  const auto levels = sparsity_scan(cfg);
  std::vector<Proportion> eps, delta, p;
  std::string detail;
  for (const auto& l : levels) {
    eps.push_back(l.report.eps);
    delta.push_back(l.report.delta);
    p.push_back(l.report.p);
    detail += "n=" + std::to_string(l.n) + "(eps=" + fmt(l.report.eps.estimate) + " delta=" +
              fmt(l.report.delta.estimate) + " P=" + fmt(l.report.p.estimate) + ") ";
  }
  const bool e_ok = trend_ok(eps, true), d_ok = trend_ok(delta, true), p_ok = trend_ok(p, false);
  const double m0 = levels.back().m0;
  detail += "| eps trend " + std::string(e_ok ? "ok" : "broken") + ", delta trend " + (d_ok ? "ok" : "broken") +
            ", P trend " + (p_ok ? "ok" : "broken") + ", M0(16)=" + fmt(m0) + " (>1.5)";
  return {e_ok && d_ok && p_ok && m0 > cfg.threshold_m, detail};
}

// 13. Byte-identical CLI outputs across reruns and thread counts.
std::string strip_metadata(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  if (p.extension() != ".json") return s.str();
  nlohmann::json doc = nlohmann::json::parse(s.str());
  doc.erase("metadata");
  return doc.dump();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "pfode_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::map<std::string, std::string> configs{
      {"velocity-check", R"({"velocity_check": {"points": 20}})"},
      {"grid-instability", R"({"grid": {"nx": 41, "ny": 41}})"},
      {"recon-correlation", R"({"correlation": {"count": 100}})"},
      {"bound-verify", R"({"bound": {"M": 2, "samples": 300}})"},
      {"sparsity-scan", R"({"scan": {"dims": [2, 4], "samples": 200}})"},
      {"chi2-tail", R"({"chi2": {"dims": [1, 2, 8]}})"}};
  int identical = 0;
  std::string mismatches;
  for (const auto& [name, text] : configs) {
    const fs::path cfg = root / (name + ".json");
    std::ofstream(cfg) << text;
    std::vector<fs::path> outs;
    for (const std::string threads : {"1", "1", "3"}) {
      const fs::path out = root / (name + "_" + std::to_string(outs.size()));
      const std::string cmd = std::string("\"") + PFODE_LAB_EXE + "\" " + name + " --config \"" + cfg.string() +
                              "\" --seed 4242 --threads " + threads + " --out \"" + out.string() + "\" > \"" +
                              (root / "log.txt").string() + "\" 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, name + " run failed"};
      outs.push_back(out);
    }
    bool same = true;
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(outs[0])) {
      const fs::path rel = entry.path().filename();
      ++files;
      const std::string ref = strip_metadata(outs[0] / rel);
      for (std::size_t k = 1; k < outs.size(); ++k) {
        if (!fs::exists(outs[k] / rel) || strip_metadata(outs[k] / rel) != ref) same = false;
      }
    }
    if (same && files >= 1) {
      ++identical;
    } else {
      mismatches += " " + name;
    }
  }
  return {identical == static_cast<int>(configs.size()),
          std::to_string(identical) + "/" + std::to_string(configs.size()) +
              " experiments byte-identical over reruns and --threads 1/3" +
              (mismatches.empty() ? "" : "; differing:" + mismatches)};
}

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "identity flow", 5, identity_flow},
      {2, "velocity correctness", 10, velocity_correctness},
      {3, "continuity equation", 10, continuity_equation},
      {4, "determinant identity", 30, determinant_identity},
      {5, "solver orders", 30, solver_orders},
      {6, "instability construction", 30, instability_construction},
      {7, "grid map between modes", 300, grid_map},
      {8, "reconstruction error correlation", 300, correlation},
      {9, "probability lower bound", 300, lower_bound},
      {10, "inverted-noise norm tail", 300, delta_closed_form},
      {11, "chi-square tail", 30, chi_square},
      {12, "sparsity scaling trend", 900, sparsity_trend},
      {13, "determinism", 600, determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
              << " [" << fmt(secs) << " s, limit " << fmt(c.limit_seconds) << " s"
              << (in_time ? "" : ", too slow") << "]" << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
