#include "pfode/ode.hpp"

#include <algorithm>
#include <cmath>

namespace pfode {

namespace {

constexpr double kSafety = 0.9;
constexpr double kAlpha = 0.7 / 5.0;
constexpr double kBeta = 0.4 / 5.0;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kMinStep = 1e-14;

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// b - b_hat (embedded 4th order)
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

void record(Trajectory* trajectory, double t, const Vector& y) {
  if (trajectory) {
    trajectory->times.push_back(t);
    trajectory->states.push_back(y);
  }
}

void check_span(double t_start, double t_end) {
  if (!(t_start >= 0.0 && t_start <= 1.0 && t_end >= 0.0 && t_end <= 1.0)) {
    throw std::invalid_argument("integrate: times must lie in [0, 1]");
  }
  if (t_start == t_end) throw std::invalid_argument("integrate: t_start equals t_end");
}

Vector integrate_fixed(const Field& f, Vector y, double t0, double t1, const SolverConfig& cfg,
                       Trajectory* trajectory) {
  const int steps = cfg.steps;
  const double h = (t1 - t0) / steps;
  Vector k1(y.size()), k2(y.size());
  record(trajectory, t0, y);
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    const double t_next = (i + 1 == steps) ? t1 : t0 + (i + 1) * h;
    const double dt = t_next - t;
    f(t, y, k1);
    if (cfg.method == Method::euler) {
      y += dt * k1;
    } else {
      const Vector predictor = y + dt * k1;
      f(t_next, predictor, k2);
      y += 0.5 * dt * (k1 + k2);
    }
    record(trajectory, t_next, y);
  }
  return y;
}

Vector integrate_rk45(const Field& f, Vector y, double t0, double t1, const SolverConfig& cfg,
                      Trajectory* trajectory) {
  const Eigen::Index n = y.size();
  const double direction = t1 > t0 ? 1.0 : -1.0;
  double t = t0;
  double h = (t1 - t0) / 100.0;
  double err_prev = 1e-4;
  bool rejected_last = false;

  Vector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), stage(n), y_new(n);
  f(t, y, k1);
  record(trajectory, t, y);

  std::size_t attempts = 0;
  while (direction * (t1 - t) > 0.0) {
    if (++attempts > cfg.max_steps) throw SolverError("rk45 exceeded max_steps", t);
    if (std::abs(h) < kMinStep) throw SolverError("rk45 step size underflow", t);

    bool last = false;
    if (direction * (t + h - t1) >= 0.0) {
      h = t1 - t;
      last = true;
    }

    stage = y + h * (a21 * k1);
    f(t + c2 * h, stage, k2);
    stage = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, stage, k3);
    stage = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, stage, k4);
    stage = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, stage, k5);
    stage = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    const double t_new = last ? t1 : t + h;
    f(t_new, stage, k6);
    y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t_new, y_new, k7);

    double err_sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                            e7 * k7[i]);
      const double scale = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      err_sq += (e / scale) * (e / scale);
    }
    const double err = std::sqrt(err_sq / static_cast<double>(n));
    if (!std::isfinite(err)) {
      h *= kMinFactor;
      rejected_last = true;
      continue;
    }

    if (err <= 1.0) {
      double factor = err == 0.0 ? kMaxFactor
                                 : kSafety * std::pow(err, -kAlpha) * std::pow(err_prev, kBeta);
      factor = std::clamp(factor, kMinFactor, kMaxFactor);
      if (rejected_last) factor = std::min(factor, 1.0);
      t = t_new;
      y.swap(y_new);
      k1.swap(k7);
      record(trajectory, t, y);
      err_prev = std::max(err, 1e-4);
      rejected_last = false;
      h *= factor;
    } else {
      const double factor = std::max(kMinFactor, kSafety * std::pow(err, -kAlpha));
      h *= factor;
      rejected_last = true;
    }
  }
  return y;
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::euler: return "euler";
    case Method::heun: return "heun";
    case Method::rk45: return "rk45";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "euler") return Method::euler;
  if (name == "heun") return Method::heun;
  if (name == "rk45") return Method::rk45;
  throw std::invalid_argument("unknown solver method '" + name + "'");
}

void SolverConfig::validate() const {
  if (method == Method::rk45) {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) {
      throw std::invalid_argument("rk45 requires positive tolerances");
    }
    if (max_steps < 1) throw std::invalid_argument("rk45 requires max_steps >= 1");
  } else if (steps < 1) {
    throw std::invalid_argument("fixed-step methods require steps >= 1");
  }
}

Vector integrate(const Field& field, Vector y0, double t_start, double t_end,
                 const SolverConfig& cfg, Trajectory* trajectory) {
  check_span(t_start, t_end);
  cfg.validate();
  if (trajectory) {
    trajectory->times.clear();
    trajectory->states.clear();
  }
  if (cfg.method == Method::rk45) return integrate_rk45(field, std::move(y0), t_start, t_end, cfg, trajectory);
  return integrate_fixed(field, std::move(y0), t_start, t_end, cfg, trajectory);
}

Field velocity_field(const GaussianMixture& gm) {
  return [&gm](double t, const Vector& x, Vector& dx) { dx = velocity(gm, x, t); };
}

Vector generate(const GaussianMixture& gm, const Vector& z, const SolverConfig& cfg,
                Trajectory* trajectory) {
  if (z.size() != gm.dim()) throw std::invalid_argument("generate: dimension mismatch");
  return integrate(velocity_field(gm), z, 1.0, 0.0, cfg, trajectory);
}

Vector invert(const GaussianMixture& gm, const Vector& x, const SolverConfig& cfg,
              Trajectory* trajectory) {
  if (x.size() != gm.dim()) throw std::invalid_argument("invert: dimension mismatch");
  return integrate(velocity_field(gm), x, 0.0, 1.0, cfg, trajectory);
}

Reconstruction reconstruct(const GaussianMixture& gm, const Vector& x,
                           const SolverConfig& cfg_inversion, const SolverConfig& cfg_generation) {
  Reconstruction out;
  out.inverted_noise = invert(gm, x, cfg_inversion);
  out.reconstructed = generate(gm, out.inverted_noise, cfg_generation);
  return out;
}

JacobianField jacobian_field(const GaussianMixture& gm) {
  return [&gm](double t, const Vector& x) {
    FieldValue fv = evaluate_field(gm, x, t, true);
    return std::make_pair(std::move(fv.velocity), std::move(fv.jacobian));
  };
}

FlowJacobian integrate_with_jacobian(const JacobianField& field, const Vector& x_init,
                                     double t_start, double t_end, const SolverConfig& cfg) {
  const Eigen::Index n = x_init.size();
  Vector y(n + n * n);
  y.head(n) = x_init;
  Eigen::Map<Matrix>(y.data() + n, n, n).setIdentity();

  Field augmented = [&field, n](double t, const Vector& state, Vector& d) {
    auto [v, dv] = field(t, state.head(n));
    d.resize(n + n * n);
    d.head(n) = v;
    Eigen::Map<Matrix>(d.data() + n, n, n).noalias() =
        dv * Eigen::Map<const Matrix>(state.data() + n, n, n);
  };
  const Vector out = integrate(augmented, std::move(y), t_start, t_end, cfg);
  return FlowJacobian{out.head(n), Eigen::Map<const Matrix>(out.data() + n, n, n)};
}

FlowJacobian integrate_with_jacobian(const GaussianMixture& gm, const Vector& x_init,
                                     double t_start, double t_end, const SolverConfig& cfg) {
  if (x_init.size() != gm.dim()) {
    throw std::invalid_argument("integrate_with_jacobian: dimension mismatch");
  }
  return integrate_with_jacobian(jacobian_field(gm), x_init, t_start, t_end, cfg);
}

FlowDivergence integrate_with_divergence(const GaussianMixture& gm, const Vector& x_init,
                                         double t_start, double t_end, const SolverConfig& cfg) {
  const Eigen::Index n = gm.dim();
  if (x_init.size() != n) throw std::invalid_argument("integrate_with_divergence: dimension mismatch");
  Vector y(n + 1);
  y.head(n) = x_init;
  y[n] = 0.0;
  Field augmented = [&gm, n](double t, const Vector& state, Vector& d) {
    FieldValue fv = evaluate_field(gm, state.head(n), t, true);
    d.resize(n + 1);
    d.head(n) = fv.velocity;
    d[n] = fv.jacobian.trace();
  };
  const Vector out = integrate(augmented, std::move(y), t_start, t_end, cfg);
  return FlowDivergence{out.head(n), out[n]};
}

}  // namespace pfode
