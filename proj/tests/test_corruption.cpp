#include <gtest/gtest.h>

#include <filesystem>

#include "stseg/corruption.hpp"
#include "stseg/dataset.hpp"
#include "stseg/procedural.hpp"
#include "test_util.hpp"

using namespace stseg;

namespace {

Tensor<float> scene_batch(int n, std::uint64_t seed) {
  Tensor<float> out(n, 3, 64, 64);
  for (int i = 0; i < n; ++i) {
    const auto s = generate_scene(derive_seed(seed, "corruption-test", i), SceneConfig{});
    std::copy(s.image.values().begin(), s.image.values().end(), out.item(i).begin());
  }
  return out;
}

double mse(const Tensor<float>& a, const Tensor<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.values()[i]) - b.values()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST(Corruption, NamesRoundTrip) {
  EXPECT_EQ(kAllCorruptions.size(), 8u);
  for (auto k : kAllCorruptions) EXPECT_EQ(corruption_from_name(corruption_name(k)), k);
  EXPECT_EQ(corruption_label(CorruptionKind::kDefocusBlur), "Defocus-blur");
  EXPECT_THROW(corruption_from_name("fog"), ValidationError);
}

TEST(Corruption, SpecValidation) {
  EXPECT_THROW(validate(CorruptionSpec{CorruptionKind::kContrast, 0, 1}), ValidationError);
  EXPECT_THROW(validate(CorruptionSpec{CorruptionKind::kContrast, 6, 1}), ValidationError);
  EXPECT_THROW(validate(CorruptionSpec{static_cast<CorruptionKind>(42), 3, 1}), ValidationError);
  EXPECT_THROW(corrupt(Tensor<float>(1, 3, 8, 8), CorruptionSpec{static_cast<CorruptionKind>(42), 3, 1}),
               ValidationError);
}

TEST(Corruption, ZeroNoiseIsIdentity) {
  const auto x = scene_batch(2, 1);
  Rng rng(0);
  EXPECT_EQ(gaussian_noise(x, 0.0, rng).values(), x.values());
  EXPECT_EQ(brightness(x, 0.0).values().size(), x.values().size());
  const auto c = contrast(x, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(c.values()[i], x.values()[i], 1e-6);
}

TEST(Corruption, DeterministicInRangeAndSeedSensitive) {
  const auto x = scene_batch(3, 2);
  for (auto k : kAllCorruptions) {
    for (int sev = 1; sev <= 5; ++sev) {
      const CorruptionSpec spec{k, sev, 1234};
      const auto a = corrupt(x, spec);
      const auto b = corrupt(x, spec);
      EXPECT_EQ(a.values(), b.values()) << corruption_name(k);
      EXPECT_EQ(a.shape(), x.shape());
      for (float v : a.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f && std::isfinite(v)) << corruption_name(k);
    }
  }
  const auto a = corrupt(x, {CorruptionKind::kGaussianNoise, 3, 1});
  const auto b = corrupt(x, {CorruptionKind::kGaussianNoise, 3, 2});
  EXPECT_NE(a.values(), b.values());
}

TEST(Corruption, DeviationNonDecreasingInSeverity) {
  const auto x = scene_batch(100, 3);
  for (auto k : kAllCorruptions) {
    double prev = 0.0;
    for (int sev = 1; sev <= 5; ++sev) {
      const double d = mse(x, corrupt(x, {k, sev, 77}));
      EXPECT_GE(d, prev) << corruption_name(k) << " severity " << sev;
      prev = d;
    }
    EXPECT_GT(prev, 0.0) << corruption_name(k);
  }
}

TEST(Corruption, FrostOverlayIsDeterministicAndBounded) {
  Rng a(5), b(5);
  const auto f1 = frost_overlay(64, 64, a);
  const auto f2 = frost_overlay(64, 64, b);
  EXPECT_EQ(f1.values(), f2.values());
  for (float v : f1.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
}

TEST(CorruptedSet, CountsProvenanceAndUntouchedLabels) {
  stseg::test::TempDir dir("corrupt");
  const auto root = dir.str();
  generate_split(root, "val", "source", 10, 32, 32, 5, Normalization{}, false);
  const auto m = build_corrupted_set(root, "val", "val_c", {kAllCorruptions.begin(), kAllCorruptions.end()},
                                     {1, 2, 3, 4, 5}, 5, false);
  EXPECT_EQ(m.samples.size(), 400u);
  EXPECT_THROW(build_corrupted_set(root, "val", "val_c", {CorruptionKind::kContrast}, {1}, 5, false),
               ValidationError);
  const auto clean = load_split(root, "val");
  const auto cor = load_split(root, "val_c");
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < clean.manifest.samples.size(); ++i) index[clean.manifest.samples[i].id] = int(i);
  for (std::size_t i = 0; i < cor.manifest.samples.size(); ++i) {
    const auto& rec = cor.manifest.samples[i];
    ASSERT_TRUE(rec.corruption.has_value());
    ASSERT_TRUE(index.contains(rec.clean_id));
    EXPECT_EQ(cor.labels[i].ids, clean.labels[index[rec.clean_id]].ids);
  }
  // forced rebuild reproduces the same images
  const auto again = build_corrupted_set(root, "val", "val_c", {kAllCorruptions.begin(), kAllCorruptions.end()},
                                         {1, 2, 3, 4, 5}, 5, true);
  EXPECT_EQ(again, m);
  const auto reloaded = load_split(root, "val_c");
  for (std::size_t i = 0; i < reloaded.images.size(); ++i) EXPECT_EQ(reloaded.images[i].values(), cor.images[i].values());
}
