#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "stseg/feature_stats.hpp"
#include "test_util.hpp"

using namespace stseg;
using stseg::test::random_tensor;

TEST(ComputeStyle, ConstantMapHasZeroStd) {
  Tensor<double> f(1, 2, 4, 4, 5.0);
  const auto s = compute_style(f);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].mean, (std::vector<double>{5.0, 5.0}));
  EXPECT_EQ(s[0].std, (std::vector<double>{0.0, 0.0}));
}

TEST(ComputeStyle, TwoPointPopulationStd) {
  Tensor<double> f(1, 1, 2, 2);
  f.values() = {1.0, 3.0, 3.0, 1.0};
  const auto s = compute_style(f);
  EXPECT_DOUBLE_EQ(s[0].mean[0], 2.0);
  EXPECT_DOUBLE_EQ(s[0].std[0], 1.0);
}

TEST(ComputeStyle, MatchesTwoPassOracle) {
  Rng rng(11);
  const auto f = random_tensor<double>({2, 3, 8, 8}, rng, -4.0, 7.0);
  const auto s = compute_style(f);
  for (int b = 0; b < 2; ++b) {
    for (int c = 0; c < 3; ++c) {
      const auto p = f.plane(b, c);
      double mean = 0.0;
      for (double v : p) mean += v;
      mean /= static_cast<double>(p.size());
      double var = 0.0;
      for (double v : p) var += (v - mean) * (v - mean);
      var /= static_cast<double>(p.size());
      EXPECT_NEAR(s[b].mean[c], mean, 1e-6);
      EXPECT_NEAR(s[b].std[c], std::sqrt(var), 1e-6);
    }
  }
}

TEST(ComputeStyle, InvariantToSpatialPermutation) {
  Rng rng(3);
  auto f = random_tensor<double>({1, 2, 6, 6}, rng);
  const auto before = compute_style(f);
  auto p = f.plane(0, 1);
  std::reverse(p.begin(), p.end());
  std::rotate(p.begin(), p.begin() + 7, p.end());
  const auto after = compute_style(f);
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(before[0].mean[c], after[0].mean[c], 1e-12);
    EXPECT_NEAR(before[0].std[c], after[0].std[c], 1e-12);
  }
}

TEST(ComputeStyle, RejectsNonFiniteNamingLayer) {
  Tensor<float> f(1, 2, 3, 3, 1.0f);
  f(0, 1, 2, 2) = std::numeric_limits<float>::quiet_NaN();
  try {
    compute_style(f, 2);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos);
  }
}

TEST(SubstituteStyle, AffineArithmetic) {
  Tensor<double> f(1, 1, 1, 2);
  f.values() = {1.0, 3.0};
  const std::vector<StyleStats<double>> tgt{StyleStats<double>({0.0}, {2.0})};
  const auto out = substitute_style(f, tgt);
  EXPECT_NEAR(out.values()[0], -2.0, 1e-9);
  EXPECT_NEAR(out.values()[1], 2.0, 1e-9);
}

TEST(SubstituteStyle, IdentityWhenTargetIsOwnStyle) {
  Rng rng(5);
  const auto f = random_tensor<double>({2, 4, 5, 5}, rng, -2.0, 3.0);
  const auto out = substitute_style(f, compute_style(f));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out.values()[i], f.values()[i], 1e-5);
}

TEST(SubstituteStyle, FlatChannelMapsToTargetMean) {
  Tensor<float> f(1, 1, 3, 3, 4.0f);
  const std::vector<StyleStats<float>> tgt{StyleStats<float>({-1.5f}, {0.7f})};
  const auto out = substitute_style(f, tgt);
  for (float v : out.values()) EXPECT_FLOAT_EQ(v, -1.5f);
}

TEST(SubstituteStyle, RoundTripRecoversTarget) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 1 + uniform_int(rng, 6);
    Tensor<float> f(2, c, 8, 8);
    for (int b = 0; b < 2; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        const double mu = -3.0 + 6.0 * uniform01(rng);
        const double sd = 0.01 * std::pow(300.0, uniform01(rng));
        for (auto& v : f.plane(b, ch)) v = static_cast<float>(mu + sd * standard_normal(rng));
      }
    }
    std::vector<StyleStats<float>> tgt;
    for (int b = 0; b < 2; ++b) {
      StyleStats<float> s(c);
      for (int ch = 0; ch < c; ++ch) {
        s.mean[ch] = static_cast<float>(-2.0 + 4.0 * uniform01(rng));
        s.std[ch] = static_cast<float>(0.05 + 2.0 * uniform01(rng));
      }
      tgt.push_back(s);
    }
    const auto got = compute_style(substitute_style(f, tgt));
    for (int b = 0; b < 2; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        EXPECT_NEAR(got[b].mean[ch], tgt[b].mean[ch], 1e-4);
        EXPECT_NEAR(got[b].std[ch], tgt[b].std[ch], 1e-4);
      }
    }
  }
}

TEST(SubstituteStyle, PreservesRankWithinChannel) {
  Rng rng(23);
  const auto f = random_tensor<double>({1, 3, 4, 4}, rng);
  const std::vector<StyleStats<double>> tgt{StyleStats<double>({1.0, -1.0, 0.0}, {0.5, 2.0, 0.1})};
  const auto out = substitute_style(f, tgt);
  for (int c = 0; c < 3; ++c) {
    const auto a = f.plane(0, c);
    const auto b = out.plane(0, c);
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[i] < a[j]) EXPECT_LT(b[i], b[j]);
      }
    }
  }
}

TEST(SubstituteStyle, SingleTargetBroadcastsOverBatch) {
  Rng rng(2);
  const auto f = random_tensor<double>({3, 2, 4, 4}, rng);
  const std::vector<StyleStats<double>> one{StyleStats<double>({0.5, 0.25}, {1.0, 0.3})};
  const auto out = compute_style(substitute_style(f, one));
  for (int b = 0; b < 3; ++b) {
    EXPECT_NEAR(out[b].mean[1], 0.25, 1e-9);
    EXPECT_NEAR(out[b].std[1], 0.3, 1e-6);
  }
}

TEST(SubstituteStyle, RejectsChannelMismatchAndBadTargets) {
  Tensor<double> f(2, 3, 4, 4, 1.0);
  const std::vector<StyleStats<double>> wrong_c{StyleStats<double>(2)};
  EXPECT_THROW(substitute_style(f, wrong_c), ValidationError);
  const std::vector<StyleStats<double>> wrong_b(3, StyleStats<double>(3));
  EXPECT_THROW(substitute_style(f, wrong_b), ValidationError);
  const std::vector<StyleStats<double>> negative{StyleStats<double>({0, 0, 0}, {1, -1, 1})};
  EXPECT_THROW(substitute_style(f, negative), ValidationError);
  const std::vector<StyleStats<double>> ok{StyleStats<double>({0, 0, 0}, {1, 1, 1})};
  EXPECT_THROW(substitute_style(f, ok, 0.0), ValidationError);
  EXPECT_THROW(StyleStats<double>({1.0}, {1.0, 2.0}), ValidationError);
}

TEST(SubstituteStyle, BackwardMatchesFiniteDifferences) {
  Rng rng(31);
  auto f = random_tensor<double>({2, 2, 2, 2}, rng, -1.0, 1.0);
  // a nearly flat channel exercises the regularized denominator
  for (auto& v : f.plane(1, 0)) v = 0.3 + 1e-3 * v;
  const std::vector<StyleStats<double>> tgt{StyleStats<double>({0.2, -0.4}, {1.3, 0.6}),
                                            StyleStats<double>({-1.0, 0.1}, {0.8, 2.0})};
  const auto w = random_tensor<double>(f.shape(), rng);
  auto objective = [&](const Tensor<double>& x) {
    const auto y = substitute_style(x, tgt);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w.values()[i] * y.values()[i];
    return s;
  };
  const auto grad = substitute_style_backward(f, tgt, w);
  const double h = 1e-6;
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto xp = f;
    auto xm = f;
    xp.values()[i] += h;
    xm.values()[i] -= h;
    const double fd = (objective(xp) - objective(xm)) / (2 * h);
    EXPECT_NEAR(grad.values()[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "index " << i;
  }
}
