#include "stseg/special_functions.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "stseg/error.hpp"

namespace stseg {
namespace {

template <std::size_t N>
double poly(const std::array<double, N>& c, double x) {
  double acc = c[N - 1];
  for (std::size_t i = N - 1; i-- > 0;) acc = acc * x + c[i];
  return acc;
}

constexpr std::array<double, 8> kA = {3.3871328727963666080e0, 1.3314166789178437745e+2,
                                      1.9715909503065514427e+3, 1.3731693765509461125e+4,
                                      4.5921953931549871457e+4, 6.7265770927008700853e+4,
                                      3.3430575583588128105e+4, 2.5090809287301226727e+3};
constexpr std::array<double, 8> kB = {1.0,
                                      4.2313330701600911252e+1,
                                      6.8718700749205790830e+2,
                                      5.3941960214247511077e+3,
                                      2.1213794301586595867e+4,
                                      3.9307895800092710610e+4,
                                      2.8729085735721942674e+4,
                                      5.2264952788528545610e+3};
constexpr std::array<double, 8> kC = {1.42343711074968357734e0, 4.63033784615654529590e0,
                                      5.76949722146069140550e0, 3.64784832476320460504e0,
                                      1.27045825245236838258e0, 2.41780725177450611770e-1,
                                      2.27238449892691845833e-2, 7.74545014278341407640e-4};
constexpr std::array<double, 8> kD = {1.0,
                                      2.05319162663775882187e0,
                                      1.67638483018380384940e0,
                                      6.89767334985100004550e-1,
                                      1.48103976427480074590e-1,
                                      1.51986665636164571966e-2,
                                      5.47593808499534494600e-4,
                                      1.05075007164441684324e-9};
constexpr std::array<double, 8> kE = {6.65790464350110377720e0, 5.46378491116411436990e0,
                                      1.78482653991729133580e0, 2.96560571828504891230e-1,
                                      2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                      2.71155556874348757815e-5, 2.01033439929228813265e-7};
constexpr std::array<double, 8> kF = {1.0,
                                      5.99832206555887937690e-1,
                                      1.36929880922735805310e-1,
                                      1.48753612908506148525e-2,
                                      7.86869131145613259100e-4,
                                      1.84631831751005468180e-5,
                                      1.42151175831644588870e-7,
                                      2.04426310338993978564e-15};

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 100000;

// exp(-x + a ln x - lgamma(a))
double gamma_prefactor(double a, double x) { return std::exp(-x + a * std::log(x) - std::lgamma(a)); }

double series_p(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps) break;
  }
  return sum * gamma_prefactor(a, x);
}

double continued_fraction_q(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return gamma_prefactor(a, x) * h;
}

void check_gamma_args(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("incomplete gamma: shape must be positive");
  if (!(x >= 0.0)) throw ValidationError("incomplete gamma: x must be non-negative");
}

void check_probability(double p, const char* who) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError(std::string(who) + ": p must lie in (0,1), got " + std::to_string(p));
  }
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  check_probability(p, "normal_quantile");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * poly(kA, r) / poly(kB, r);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double x = 0.0;
  if (r <= 5.0) {
    r -= 1.6;
    x = poly(kC, r) / poly(kD, r);
  } else {
    r -= 5.0;
    x = poly(kE, r) / poly(kF, r);
  }
  return q < 0.0 ? -x : x;
}

double regularized_gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return series_p(a, x);
  return 1.0 - continued_fraction_q(a, x);
}

double regularized_gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - series_p(a, x);
  return continued_fraction_q(a, x);
}

double gamma_cdf(double x, double shape, double scale) {
  if (!(scale > 0.0)) throw ValidationError("gamma_cdf: scale must be positive");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(shape, x / scale);
}

namespace {

// Solves P(a, y) = p for y in standard (unit-scale) units inside [lo, hi].
double invert_standard_gamma(double p, double a, double lo, double hi, double y) {
  const double lga = std::lgamma(a);
  // Work on whichever tail keeps the residual well conditioned.
  const bool upper = p > 0.5;
  const double target = upper ? 1.0 - p : p;
  if (!(y > lo && y < hi)) y = 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    const double f = upper ? (regularized_gamma_q(a, y) - target) : (regularized_gamma_p(a, y) - target);
    // P is increasing in y, Q decreasing.
    const bool below = upper ? (f > 0.0) : (f < 0.0);
    if (below) {
      lo = y;
    } else {
      hi = y;
    }
    const double density = std::exp((a - 1.0) * std::log(y) - y - lga);
    double next = 0.5 * (lo + hi);
    if (density > 0.0 && std::isfinite(density)) {
      const double step = (upper ? -f : f) / density;
      const double candidate = y - step;
      if (candidate > lo && candidate < hi) next = candidate;
    }
    const double change = std::fabs(next - y);
    y = next;
    if (change <= 1e-14 * y || hi - lo <= 1e-15 * hi) break;
  }
  return y;
}

}  // namespace

double gamma_quantile_bracketed(double p, double shape, double scale, double lo, double hi) {
  check_probability(p, "gamma_quantile");
  if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) || !std::isfinite(scale)) {
    throw ValidationError("gamma_quantile: shape and scale must be positive and finite");
  }
  const double lo_s = std::max(lo / scale, 0.0);
  const double hi_s = hi / scale;
  return scale * invert_standard_gamma(p, shape, lo_s, hi_s, 0.5 * (lo_s + hi_s));
}

double gamma_quantile(double p, double shape, double scale) {
  check_probability(p, "gamma_quantile");
  if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) || !std::isfinite(scale)) {
    throw ValidationError("gamma_quantile: shape and scale must be positive and finite");
  }
  // Wilson-Hilferty start, small-x power series start for the lower tail.
  const double z = normal_quantile(p);
  const double c = 1.0 / (9.0 * shape);
  double guess = shape * std::pow(1.0 - c + z * std::sqrt(c), 3.0);
  const double small_x = std::exp((std::log(p) + std::lgamma(shape + 1.0)) / shape);
  if (!(guess > 0.0) || shape < 1.0) guess = small_x;

  // Bracket the root.
  double lo = 0.0;
  double hi = std::max(guess, 1.0);
  while (regularized_gamma_p(shape, hi) < p && hi < 1e300) {
    lo = hi;
    hi *= 2.0;
  }
  return scale * invert_standard_gamma(p, shape, lo, hi, guess);
}

}  // namespace stseg
