#pragma once

// Scalar distribution functions used by the style sampler.

namespace stseg {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile (Wichura's AS241, ~1e-16 relative accuracy).
/// Throws ValidationError unless 0 < p < 1.
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(a, x): series for x < a + 1, Lentz continued
/// fraction otherwise.
double regularized_gamma_p(double a, double x);

/// Upper complement Q(a, x) = 1 - P(a, x), computed without cancellation.
double regularized_gamma_q(double a, double x);

/// CDF of Gamma(shape k, scale theta).
double gamma_cdf(double x, double shape, double scale);

/// Gamma(shape, scale) quantile: x >= 0 with P(shape, x / scale) = p. Newton iteration
/// on the CDF safeguarded by a bisection bracket. Throws ValidationError for
/// p outside (0,1) or non-positive parameters.
double gamma_quantile(double p, double shape, double scale);

/// Same, but with a known bracket [lo, hi] (in x units) that contains the answer.
double gamma_quantile_bracketed(double p, double shape, double scale, double lo, double hi);

}  // namespace stseg
