#include "pfode/special.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pfode {

namespace {

constexpr double kSqrtHalf = 0.70710678118654752440;
constexpr int kMaxGammaIterations = 10000;
constexpr double kGammaEps = 1e-16;

// Series for P(a, x): x^a e^-x / Gamma(a+1) * sum x^k / ((a+1)...(a+k)).
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int k = 1; k < kMaxGammaIterations; ++k) {
    term *= x / (a + k);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kGammaEps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw std::runtime_error("regularized_gamma_p: series did not converge");
}

// Continued fraction for Q(a, x), modified Lentz.
double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kGammaEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxGammaIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaEps) {
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
  }
  throw std::runtime_error("regularized_gamma_q: continued fraction did not converge");
}

void check_gamma_args(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) {
    throw std::invalid_argument("incomplete gamma requires a > 0 and x >= 0");
  }
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kSqrtHalf); }

double log_normal_cdf(double x) {
  if (x > -20.0) return std::log(normal_cdf(x));
  // log Phi(x) = -x^2/2 - log(-x) - log(2 pi)/2 + log(1 - 1/x^2 + 3/x^4 - 15/x^6 + ...)
  const double inv2 = 1.0 / (x * x);
  double term = 1.0;
  double series = 1.0;
  for (int k = 1; k < 8; ++k) {
    term *= -(2.0 * k - 1.0) * inv2;
    series += term;
  }
  return -0.5 * x * x - std::log(-x) - 0.5 * kLogTwoPi + std::log(series);
}

double log_normal_cdf_difference(double upper, double lower) {
  if (!(upper > lower)) {
    throw std::invalid_argument("log_normal_cdf_difference requires upper > lower");
  }
  // Work in whichever tail keeps both terms small.
  if (lower > 0.0) {
    std::swap(upper, lower);
    upper = -upper;
    lower = -lower;
  }
  const double log_hi = log_normal_cdf(upper);
  const double log_lo = log_normal_cdf(lower);
  return log_hi + std::log1p(-std::exp(log_lo - log_hi));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile requires p in (0, 1)");
  }
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double regularized_gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_continued_fraction(a, x);
}

double regularized_gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

}  // namespace pfode
