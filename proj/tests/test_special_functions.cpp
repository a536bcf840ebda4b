#include <gtest/gtest.h>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>

#include "stseg/error.hpp"
#include "stseg/special_functions.hpp"

using namespace stseg;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

double big_normal_quantile(double p) {
  const boost::math::normal_distribution<Big> nd;
  return static_cast<double>(boost::math::quantile(nd, Big(p)));
}

}  // namespace

TEST(NormalQuantile, KnownValues) {
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.75), 0.6744897501960817, 1e-12);
}

TEST(NormalQuantile, MatchesHighPrecisionOracle) {
  for (int i = 0; i <= 400; ++i) {
    const double t = static_cast<double>(i) / 400.0;
    const double p = 1e-6 + (1.0 - 2e-6) * t;
    EXPECT_NEAR(normal_quantile(p), big_normal_quantile(p), 1e-8) << "p = " << p;
  }
  for (double p : {1e-12, 1e-9, 3e-7, 1.0 - 1e-9}) {
    EXPECT_NEAR(normal_quantile(p), big_normal_quantile(p), 1e-8) << "p = " << p;
  }
}

TEST(NormalQuantile, MonotoneAndInvertsCdf) {
  double prev = -INFINITY;
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    const double x = normal_quantile(p);
    EXPECT_GT(x, prev);
    EXPECT_NEAR(normal_cdf(x), p, 1e-13);
    prev = x;
  }
}

TEST(NormalQuantile, RejectsOutsideUnitInterval) {
  for (double p : {0.0, 1.0, -0.1, 1.5, std::nan("")}) EXPECT_THROW(normal_quantile(p), ValidationError) << p;
}

TEST(IncompleteGamma, MatchesBoost) {
  for (double a : {0.3, 1.0, 2.0, 5.5, 40.0}) {
    for (double x : {1e-4, 0.1, 0.9, 2.0, 6.0, 30.0, 80.0}) {
      const double ref = boost::math::gamma_p(a, x);
      const double refq = boost::math::gamma_q(a, x);
      EXPECT_NEAR(regularized_gamma_p(a, x), ref, 1e-13 + 1e-12 * ref) << a << " " << x;
      EXPECT_NEAR(regularized_gamma_q(a, x), refq, 1e-300 + 1e-10 * refq) << a << " " << x;
    }
  }
  EXPECT_EQ(regularized_gamma_p(2.0, 0.0), 0.0);
}

TEST(GammaQuantile, ExponentialClosedForm) {
  EXPECT_NEAR(gamma_quantile(0.5, 1.0, 2.0), 2.0 * std::log(2.0), 1e-12);
  for (int i = 1; i < 200; ++i) {
    const double p = i / 200.0;
    const double theta = 0.1 + i * 0.03;
    const double expected = -theta * std::log1p(-p);
    EXPECT_NEAR(gamma_quantile(p, 1.0, theta), expected, 1e-9 * expected) << p;
  }
}

TEST(GammaQuantile, KnownValueAndLowerLimit) {
  EXPECT_NEAR(gamma_quantile(0.5, 2.0, 0.5), 0.8391734950083709, 1e-9);
  EXPECT_LT(gamma_quantile(1e-12, 2.0, 0.5), 1e-5);
  EXPECT_GT(gamma_quantile(1e-12, 2.0, 0.5), 0.0);
}

TEST(GammaQuantile, RelativeErrorAgainstBoost) {
  for (double k : {0.05, 0.4, 1.0, 2.0, 7.3, 60.0, 900.0}) {
    for (double theta : {0.01, 0.5, 3.0}) {
      for (int i = 1; i < 60; ++i) {
        const double p = i / 60.0;
        const double ref = boost::math::gamma_p_inv(k, p) * theta;
        const double got = gamma_quantile(p, k, theta);
        EXPECT_LE(std::abs(got - ref), 1e-6 * ref) << "k=" << k << " theta=" << theta << " p=" << p;
      }
    }
  }
}

TEST(GammaQuantile, BracketedAgreesWithUnbracketed) {
  const double x = gamma_quantile(0.3, 3.0, 0.7);
  EXPECT_NEAR(gamma_quantile_bracketed(0.3, 3.0, 0.7, 0.5 * x, 2.0 * x), x, 1e-10 * x);
}

TEST(GammaQuantile, RejectsInvalidArguments) {
  EXPECT_THROW(gamma_quantile(0.0, 2.0, 1.0), ValidationError);
  EXPECT_THROW(gamma_quantile(1.0, 2.0, 1.0), ValidationError);
  EXPECT_THROW(gamma_quantile(0.5, 0.0, 1.0), ValidationError);
  EXPECT_THROW(gamma_quantile(0.5, 2.0, -1.0), ValidationError);
}
