#include <gtest/gtest.h>

#include <cmath>

#include "stseg/metrics.hpp"
#include "stseg/objectives.hpp"
#include "stseg/seg_network.hpp"
#include "stseg/texture_loss.hpp"
#include "test_util.hpp"

using namespace stseg;
using stseg::test::random_labels;
using stseg::test::random_tensor;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.widths = {4, 5, 6, 7};
  cfg.embed_dim = 5;
  cfg.num_classes = 8;
  return cfg;
}

template <typename T>
SegNetworkT<T> make_net(const NetworkConfig& cfg, std::uint64_t seed) {
  SegNetworkT<T> net(cfg);
  Rng rng(seed);
  net.init(rng);
  return net;
}

/// Styles of the raw stage outputs of a source pass, i.e. the identity styles.
template <typename T>
StyleBatch identity_styles(const ForwardPass<T>& fp) {
  StyleBatch out;
  for (int layer : {1, 2}) {
    std::vector<StyleStats<double>> per_item;
    for (const auto& s : compute_style(fp.raw[layer - 1])) per_item.push_back(s.template cast<double>());
    out.push_back(per_item);
  }
  return out;
}

StyleBatch random_style_batch(const NetworkConfig& cfg, int batch, Rng& rng) {
  StyleBatch out;
  for (int layer : {1, 2}) {
    std::vector<StyleStats<double>> items;
    for (int b = 0; b < batch; ++b) {
      StyleStats<double> s(cfg.widths[layer - 1]);
      for (int c = 0; c < s.channels(); ++c) {
        s.mean[c] = uniform01(rng);
        s.std[c] = 0.2 + uniform01(rng);
      }
      items.push_back(s);
    }
    out.push_back(items);
  }
  return out;
}

}  // namespace

TEST(SegNetwork, ProbabilitiesSumToOneAndShapes) {
  const auto cfg = tiny_config();
  const auto net = make_net<float>(cfg, 1);
  Rng rng(2);
  const auto x = random_tensor<float>({3, 3, 32, 48}, rng, -2, 2);
  const auto fp = net.forward_source(x);
  EXPECT_EQ(fp.probs.shape(), (Shape4{3, 8, 32, 48}));
  for (int s = 0; s < kNumStages; ++s) {
    EXPECT_EQ(fp.features[s].channels(), cfg.widths[s]);
    EXPECT_EQ(fp.features[s].height(), 32 >> (s + 1));
  }
  const std::size_t plane = fp.probs.shape().plane();
  for (int b = 0; b < 3; ++b) {
    const float* p = fp.probs.item(b).data();
    for (std::size_t i = 0; i < plane; ++i) {
      double sum = 0.0;
      for (int c = 0; c < 8; ++c) sum += p[c * plane + i];
      ASSERT_NEAR(sum, 1.0, 1e-5);
    }
  }
}

TEST(SegNetwork, DuplicateItemsGiveIdenticalOutputs) {
  const auto net = make_net<float>(tiny_config(), 3);
  Rng rng(4);
  auto x = random_tensor<float>({2, 3, 16, 16}, rng);
  std::copy(x.item(0).begin(), x.item(0).end(), x.item(1).begin());
  const auto p = net.predict(x);
  EXPECT_TRUE(std::equal(p.item(0).begin(), p.item(0).end(), p.item(1).begin()));
}

TEST(SegNetwork, RejectsBadInputs) {
  const auto net = make_net<float>(tiny_config(), 3);
  EXPECT_THROW(net.predict(Tensor<float>(1, 3, 20, 16)), ValidationError);
  EXPECT_THROW(net.predict(Tensor<float>(1, 1, 16, 16)), ValidationError);
  Tensor<float> nan_in(1, 3, 16, 16, NAN);
  EXPECT_THROW(net.predict(nan_in), NumericError);
  EXPECT_THROW(validate(NetworkConfig{{0, 1, 1, 1}, 4, 8, 3}), ValidationError);
}

TEST(ForwardAugmented, IdentityStylesReproduceSourcePath) {
  const auto net = make_net<float>(NetworkConfig{}, 5);
  Rng rng(6);
  const auto x = random_tensor<float>({2, 3, 32, 32}, rng, -2, 2);
  const auto fs = net.forward_source(x);
  const auto fa = net.forward_augmented(x, identity_styles(fs));
  for (std::size_t i = 0; i < fs.probs.size(); ++i) ASSERT_NEAR(fa.probs.values()[i], fs.probs.values()[i], 1e-4);
}

TEST(ForwardAugmented, PathIsolationAndStyleSensitivity) {
  const auto cfg = tiny_config();
  const auto net = make_net<float>(cfg, 7);
  Rng rng(8);
  auto x = random_tensor<float>({2, 3, 16, 16}, rng, -2, 2);
  std::copy(x.item(0).begin(), x.item(0).end(), x.item(1).begin());
  const auto before = net.forward_source(x).probs;
  const auto fa = net.forward_augmented(x, random_style_batch(cfg, 2, rng));
  const auto after = net.forward_source(x).probs;
  EXPECT_EQ(before.values(), after.values());
  EXPECT_FALSE(std::equal(fa.probs.item(0).begin(), fa.probs.item(0).end(), fa.probs.item(1).begin()));
  EXPECT_EQ(net.parameter_count(), make_net<float>(cfg, 7).parameter_count());
}

TEST(ForwardAugmented, RejectsWrongStyleLayout) {
  const auto cfg = tiny_config();
  const auto net = make_net<float>(cfg, 7);
  Rng rng(8);
  const auto x = random_tensor<float>({2, 3, 16, 16}, rng);
  auto styles = random_style_batch(cfg, 2, rng);
  const std::array<int, 1> one_layer{1};
  EXPECT_THROW(net.forward_augmented(x, styles, one_layer), ValidationError);
  const std::array<int, 2> bad_layers{1, 5};
  EXPECT_THROW(net.forward_augmented(x, styles, bad_layers), ValidationError);
  const std::array<int, 2> swapped{2, 1};
  EXPECT_THROW(net.forward_augmented(x, styles, swapped), ValidationError);
  styles[1].pop_back();
  EXPECT_THROW(net.forward_augmented(x, styles), ValidationError);
}

TEST(SegNetwork, UntrainedModelIsAtChanceLevel) {
  const auto net = make_net<float>(NetworkConfig{}, 9);
  Rng rng(10);
  const auto x = random_tensor<float>({4, 3, 32, 32}, rng, -2, 2);
  const auto y = random_labels(4, 32, 32, 8, rng);
  ConfusionMatrix cm(8);
  accumulate_confusion(cm, argmax_channels(net.predict(x)), y);
  EXPECT_LT(miou_macc(cm).miou, 0.1);
}

// Full backward through source path (CE + texture feature gradients) and augmented path
// (style + align), checked against central differences in double precision.
TEST(SegNetwork, BackwardMatchesFiniteDifferences) {
  NetworkConfig cfg;
  cfg.widths = {2, 3, 3, 2};
  cfg.embed_dim = 3;
  cfg.num_classes = 3;
  auto net = make_net<double>(cfg, 11);
  Rng rng(12);
  // Zero-initialized biases put zero-input units exactly on the ReLU kink, where central
  // differences are meaningless.
  for (auto* p : net.parameters()) {
    if (p->name.ends_with("bias")) {
      for (auto& v : p->value) v = 0.05 + 0.2 * uniform01(rng);
    }
  }
  const auto x = random_tensor<double>({2, 3, 16, 16}, rng, -1.5, 1.5);
  const auto y = random_labels(2, 16, 16, 3, rng);
  const NaturalMask mask = natural_mask(y, {1, 2}, 3);
  std::array<Tensor<double>, kNumStages> teacher;
  {
    const auto fp = net.forward_source(x);
    for (int s = 0; s < kNumStages; ++s) teacher[s] = random_tensor<double>(fp.features[s].shape(), rng, 0, 1);
  }
  const auto styles = random_style_batch(cfg, 2, rng);
  const std::vector<double> gamma(kDefaultTextureWeights.begin(), kDefaultTextureWeights.end());

  // P_s in the align term is a constant target, so the probe holds it at its unperturbed value
  const Tensor<double> ps_fixed = net.forward_source(x).probs;
  auto loss = [&](const SegNetworkT<double>& n) {
    const auto fs = n.forward_source(x);
    const auto fa = n.forward_augmented(x, styles);
    std::vector<Tensor<double>> t(teacher.begin(), teacher.end());
    std::vector<Tensor<double>> s(fs.features.begin(), fs.features.end());
    const auto tex = texture_loss_with_grad(std::span<const Tensor<double>>(t), std::span<const Tensor<double>>(s),
                                            mask, gamma);
    return cross_entropy(fs.probs, y) + style_loss(fa.probs, y) + align_loss(ps_fixed, fa.probs) + tex.loss;
  };

  net.zero_grad();
  {
    auto fs = net.forward_source(x);
    auto fa = net.forward_augmented(x, styles);
    std::vector<Tensor<double>> t(teacher.begin(), teacher.end());
    std::vector<Tensor<double>> s(fs.features.begin(), fs.features.end());
    auto tex = texture_loss_with_grad(std::span<const Tensor<double>>(t), std::span<const Tensor<double>>(s), mask,
                                      gamma);
    std::array<Tensor<double>, kNumStages> fgrads;
    for (int l = 0; l < kNumStages; ++l) fgrads[l] = std::move(tex.student_grads[l]);
    // the align target is detached: only the augmented path receives its gradient
    net.backward(fs, cross_entropy_grad(fs.probs, y), &fgrads);
    auto ga = cross_entropy_grad(fa.probs, y);
    ga += align_loss_grad(fs.probs, fa.probs);
    net.backward(fa, ga);
  }

  Rng pick(13);
  int checked = 0;
  for (auto* p : net.parameters()) {
    for (int k = 0; k < 4; ++k) {
      const std::size_t i = static_cast<std::size_t>(uniform_int(pick, static_cast<int>(p->size())));
      const double orig = p->value[i];
      const double h = 1e-5;
      p->value[i] = orig + h;
      const double lp = loss(net);
      p->value[i] = orig - h;
      const double lm = loss(net);
      p->value[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      EXPECT_NEAR(p->grad[i], fd, 1e-4 * std::max(1e-2, std::abs(fd))) << p->name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(EmaEncoder, UpdateRule) {
  const auto cfg = tiny_config();
  auto online = make_net<float>(cfg, 1);
  EmaEncoder ema(online.encoder());
  for (auto* p : ema.shadow().parameters()) std::fill(p->value.begin(), p->value.end(), 1.0f);
  for (auto* p : online.encoder().parameters()) std::fill(p->value.begin(), p->value.end(), 0.0f);
  ema_update(ema, online, 1.0);
  EXPECT_EQ(ema.shadow().parameters()[0]->value[0], 1.0f);
  ema_update(ema, online, 0.7);
  for (auto* p : ema.shadow().parameters()) {
    for (float v : p->value) ASSERT_NEAR(v, 0.7f, 1e-7);
  }
  ema_update(ema, online, 0.0);
  for (auto* p : ema.shadow().parameters()) {
    for (float v : p->value) ASSERT_EQ(v, 0.0f);
  }
  EXPECT_THROW(ema_update(ema, online, 1.5), ValidationError);
}

TEST(EmaEncoder, GeometricDriftTowardOnline) {
  const auto cfg = tiny_config();
  const auto online = make_net<double>(cfg, 2);
  EmaEncoderT<double> ema(make_net<double>(cfg, 3).encoder());
  const double d0 = ema.shadow().parameters()[2]->value[5] - online.encoder().parameters()[2]->value[5];
  for (int t = 1; t <= 10; ++t) {
    ema_update(ema, online, 0.7);
    const double d = ema.shadow().parameters()[2]->value[5] - online.encoder().parameters()[2]->value[5];
    EXPECT_NEAR(d, d0 * std::pow(0.7, t), 1e-12);
  }
}

TEST(EmaEncoder, ExtractsStylesOfShadowStages) {
  const auto cfg = tiny_config();
  const auto net = make_net<float>(cfg, 4);
  const EmaEncoder ema(net.encoder());
  Rng rng(5);
  const auto x = random_tensor<float>({3, 3, 16, 16}, rng);
  const auto styles = extract_realistic_style(ema, x);
  const auto fp = net.forward_source(x);
  ASSERT_EQ(styles.size(), 3u);
  for (int b = 0; b < 3; ++b) {
    ASSERT_EQ(styles[b].size(), 2u);
    for (int l = 0; l < 2; ++l) {
      const auto ref = compute_style(fp.raw[l]);
      EXPECT_EQ(styles[b][l].channels(), cfg.widths[l]);
      for (int c = 0; c < cfg.widths[l]; ++c) EXPECT_DOUBLE_EQ(styles[b][l].mean[c], ref[b].mean[c]);
    }
  }
  const Tensor<float> gray(2, 3, 16, 16, 0.5f);
  for (const auto& s : extract_realistic_style(ema, gray)) {
    for (const auto& layer : s) {
      for (double v : layer.std) EXPECT_TRUE(std::isfinite(v));
    }
  }
  EXPECT_EQ(extract_realistic_style(ema, x), styles);
}

TEST(Layers, ArgmaxBreaksTiesTowardLowestId) {
  Tensor<float> s(1, 3, 1, 2, 0.0f);
  s(0, 1, 0, 0) = 1.0f;
  s(0, 2, 0, 0) = 1.0f;
  const auto y = argmax_channels(s);
  EXPECT_EQ(y.ids[0], 1);
  EXPECT_EQ(y.ids[1], 0);
}
