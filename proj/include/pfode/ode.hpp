#pragma once

#include "pfode/mixture.hpp"
#include "pfode/types.hpp"

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pfode {

enum class Method { euler, heun, rk45 };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct SolverConfig {
  Method method = Method::rk45;
  int steps = 100;                  // euler / heun
  double abs_tol = 1e-9;            // rk45
  double rel_tol = 1e-7;            // rk45
  std::size_t max_steps = 1000000;  // rk45 guard

  static SolverConfig euler(int steps) { return {Method::euler, steps}; }
  static SolverConfig heun(int steps) { return {Method::heun, steps}; }
  static SolverConfig rk45(double abs_tol = 1e-9, double rel_tol = 1e-7) {
    SolverConfig cfg;
    cfg.abs_tol = abs_tol;
    cfg.rel_tol = rel_tol;
    return cfg;
  }

  void validate() const;
};

/// Recorded solution path; times run from t_start to t_end in either direction.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
};

/// Integration failure (step-size underflow or too many steps).
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double time)
      : std::runtime_error(what + " at t=" + std::to_string(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Right-hand side dy/dt = f(t, y), written into `dydt`.
using Field = std::function<void(double t, const Vector& y, Vector& dydt)>;

/// Integrates from t_start to t_end (either direction) with a signed step.
/// rk45 is Dormand-Prince 5(4) with a PI controller and lands exactly on t_end.
Vector integrate(const Field& field, Vector y0, double t_start, double t_end,
                 const SolverConfig& cfg, Trajectory* trajectory = nullptr);

Field velocity_field(const GaussianMixture& gm);

/// Noise -> data: integrate from t=1 to t=0.
Vector generate(const GaussianMixture& gm, const Vector& z, const SolverConfig& cfg,
                Trajectory* trajectory = nullptr);
/// Data -> noise: integrate from t=0 to t=1.
Vector invert(const GaussianMixture& gm, const Vector& x, const SolverConfig& cfg,
              Trajectory* trajectory = nullptr);

struct Reconstruction {
  Vector inverted_noise;
  Vector reconstructed;
};
Reconstruction reconstruct(const GaussianMixture& gm, const Vector& x,
                           const SolverConfig& cfg_inversion, const SolverConfig& cfg_generation);

/// Velocity together with its spatial Jacobian.
using JacobianField = std::function<std::pair<Vector, Matrix>(double t, const Vector& x)>;
JacobianField jacobian_field(const GaussianMixture& gm);

struct FlowJacobian {
  Vector state;
  Matrix jacobian;  // d x(t_end) / d x(t_start)
};
/// Variational system x' = v, J' = (dv/dx) J with J(t_start) = I.
FlowJacobian integrate_with_jacobian(const JacobianField& field, const Vector& x_init,
                                     double t_start, double t_end, const SolverConfig& cfg);
FlowJacobian integrate_with_jacobian(const GaussianMixture& gm, const Vector& x_init,
                                     double t_start, double t_end, const SolverConfig& cfg);

struct FlowDivergence {
  Vector state;
  double divergence_integral;  // int_{t_start}^{t_end} div v(x_t, t) dt (signed)
};
FlowDivergence integrate_with_divergence(const GaussianMixture& gm, const Vector& x_init,
                                         double t_start, double t_end, const SolverConfig& cfg);

}  // namespace pfode
