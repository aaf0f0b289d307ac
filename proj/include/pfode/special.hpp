#pragma once

// Scalar special functions: standard normal CDF in linear and log space, its
// quantile, and the regularized incomplete gamma functions.

namespace pfode {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

double normal_cdf(double x);

// log Phi(x), finite for every finite x (asymptotic series in the far left tail).
double log_normal_cdf(double x);

// log(Phi(upper) - Phi(lower)) for upper > lower, without cancellation in either tail.
double log_normal_cdf_difference(double upper, double lower);

double normal_quantile(double p);

// P(a, x) and Q(a, x) = 1 - P(a, x). Series expansion below x < a + 1,
// Lentz continued fraction above.
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

}  // namespace pfode
