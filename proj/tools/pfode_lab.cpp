// Experiment runner: one subcommand per experiment family, settings from an
// optional JSON config with command-line overrides.
#include "pfode/config.hpp"
#include "pfode/experiments.hpp"
#include "pfode/ode.hpp"
#include "pfode/output.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
  std::string line = message;
  for (char& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << kind << ": " << line << '\n';
  return code;
}

const std::map<std::string, std::string> kDescriptions{
    {"velocity-check", "Compare the velocity field with finite-difference continuity and Jacobian checks"},
    {"grid-instability", "Map instability coefficients over a 2-D noise grid"},
    {"recon-correlation", "Correlate reconstruction error with realized instability coefficients"},
    {"bound-verify", "Estimate eps, delta and P_M and check the probability lower bound"},
    {"sparsity-scan", "Scan eps, delta, P_M and M0 across dimensions on a sparse mixture"},
    {"chi2-tail", "Tabulate the chi-square tail beyond 2n + 3 sqrt(2n)"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probability-flow ODE instability experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");

  std::optional<double> bound_m;
  std::optional<std::size_t> bound_samples;
  std::vector<int> chi2_dims;

  for (const std::string& name : pfode::experiment_names()) {
    CLI::App* sub = app.add_subcommand(name, kDescriptions.at(name));
    if (name == "bound-verify") {
      sub->add_option("--M", bound_m, "Instability threshold M");
      sub->add_option("--samples", bound_samples, "Monte Carlo sample count");
    } else if (name == "chi2-tail") {
      sub->add_option("--n", chi2_dims, "Dimensions")->check(CLI::PositiveNumber);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const auto start = std::chrono::steady_clock::now();
  try {
    const pfode::Experiment experiment = pfode::experiment_from_string(name);
    nlohmann::json doc = config_path.empty() ? nlohmann::json::object()
                                             : pfode::load_config_file(config_path);
    if (!doc.is_object()) throw pfode::ConfigError("config: top level must be a table");
    if (seed) doc["seed"] = *seed;
    if (bound_m) doc["bound"]["M"] = *bound_m;
    if (bound_samples) doc["bound"]["samples"] = *bound_samples;
    if (!chi2_dims.empty()) doc["chi2"]["dims"] = chi2_dims;

    const pfode::ExperimentConfig cfg = pfode::parse_config(doc, experiment);
    const unsigned worker_count = threads.value_or(cfg.threads == 0 ? 1 : cfg.threads);
    const std::string out_dir = out.value_or(doc.contains("out") ? cfg.out : "pfode_out");

    const std::string summary = pfode::run_experiment(cfg, worker_count, out_dir);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << summary << " runtime=" << pfode::short_scientific(seconds) << "s\n";
    return 0;
  } catch (const pfode::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const pfode::SolverError& e) {
    return fail("solver", e.what(), 3);
  } catch (const pfode::IoError& e) {
    return fail("io", e.what(), 4);
  } catch (const std::invalid_argument& e) {
    return fail("validation", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}
