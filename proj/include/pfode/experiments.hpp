#pragma once

#include "pfode/config.hpp"
#include "pfode/mixture.hpp"

#include <filesystem>
#include <string>

namespace pfode {

/// |d/dt log p_t + grad log p_t . v + div v| at (x, t): the continuity equation
/// divided by p_t, with derivatives of log p_t taken by central differences.
double continuity_residual(const GaussianMixture& gm, const Vector& x, double t,
                           double step = 1e-5);

/// Relative Frobenius distance between velocity_jacobian and a central
/// finite-difference Jacobian of the velocity.
double jacobian_fd_error(const GaussianMixture& gm, const Vector& x, double t,
                         double step = 1e-6);

/// Formats as mantissa with four decimals and a plain exponent, e.g. 6.7379e-3.
std::string short_scientific(double value);

/// Runs the configured experiment, writes its files into `out` and returns the
/// one-line summary (without runtime).
std::string run_experiment(const ExperimentConfig& cfg, unsigned threads,
                           const std::filesystem::path& out);

}  // namespace pfode
