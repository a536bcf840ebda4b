#pragma once

// Four-stage strided convolutional encoder with an all-MLP style decoder, a source
// forward path, a style-augmented path that substitutes feature statistics after
// chosen stages, and an EMA shadow encoder for realistic-style extraction.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "stseg/feature_stats.hpp"
#include "stseg/layers.hpp"

namespace stseg {

inline constexpr int kNumStages = 4;

struct NetworkConfig {
  std::array<int, kNumStages> widths{32, 64, 128, 256};
  int embed_dim = 64;
  int num_classes = 8;
  int in_channels = 3;

  bool operator==(const NetworkConfig&) const = default;

  /// Input height/width must be a multiple of this.
  static constexpr int kInputMultiple = 1 << kNumStages;
};

inline void validate(const NetworkConfig& cfg) {
  for (int w : cfg.widths) {
    if (w < 1) throw ValidationError("network: stage widths must be >= 1");
  }
  if (cfg.embed_dim < 1 || cfg.num_classes < 2 || cfg.in_channels < 1) {
    throw ValidationError("network: embed_dim >= 1, num_classes >= 2 and in_channels >= 1 required");
  }
}

/// Each stage: 3x3 stride-2 conv + ReLU, 3x3 conv + ReLU. The stage output is the
/// post-activation tensor, which is where styles are measured and substituted.
template <typename T>
class Encoder {
 public:
  struct StageCache {
    typename Conv2d<T>::Cache conv_a;
    typename Conv2d<T>::Cache conv_b;
    Tensor<T> act_a;
  };

  Encoder() = default;
  explicit Encoder(const NetworkConfig& cfg, const std::string& prefix = "encoder") : cfg_(cfg) {
    validate(cfg);
    int in = cfg.in_channels;
    for (int s = 0; s < kNumStages; ++s) {
      const std::string base = prefix + ".stage" + std::to_string(s + 1);
      conv_a_[s] = Conv2d<T>(base + ".conv_a", in, cfg.widths[s], 3, 2, 1);
      conv_b_[s] = Conv2d<T>(base + ".conv_b", cfg.widths[s], cfg.widths[s], 3, 1, 1);
      in = cfg.widths[s];
    }
  }

  void init(Rng& rng) {
    for (int s = 0; s < kNumStages; ++s) {
      conv_a_[s].init(rng);
      conv_b_[s].init(rng);
    }
  }

  [[nodiscard]] const NetworkConfig& config() const { return cfg_; }

  /// Runs stage `stage` (0-based). Pass a cache to enable backward.
  Tensor<T> forward_stage(int stage, const Tensor<T>& x, StageCache* cache) const {
    Tensor<T> a = conv_a_[stage].forward(x, cache ? &cache->conv_a : nullptr);
    relu_inplace(a);
    Tensor<T> out = conv_b_[stage].forward(a, cache ? &cache->conv_b : nullptr);
    relu_inplace(out);
    if (cache) cache->act_a = std::move(a);
    if (!out.all_finite()) {
      throw NumericError("non-finite activation at encoder stage " + std::to_string(stage + 1));
    }
    return out;
  }

  /// `out` is the stage output produced by the matching forward_stage call.
  Tensor<T> backward_stage(int stage, Tensor<T> dout, const Tensor<T>& out, StageCache& cache,
                           bool input_grad) {
    relu_backward_inplace(out, dout);
    Tensor<T> da = conv_b_[stage].backward(dout, cache.conv_b, true);
    relu_backward_inplace(cache.act_a, da);
    return conv_a_[stage].backward(da, cache.conv_a, input_grad);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (int s = 0; s < kNumStages; ++s) {
      for (auto* conv : {&conv_a_[s], &conv_b_[s]}) {
        out.push_back(&conv->weight);
        out.push_back(&conv->bias);
      }
    }
    return out;
  }
  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    for (auto* p : const_cast<Encoder*>(this)->parameters()) out.push_back(p);
    return out;
  }

 private:
  NetworkConfig cfg_;
  std::array<Conv2d<T>, kNumStages> conv_a_;
  std::array<Conv2d<T>, kNumStages> conv_b_;
};

/// Projects every stage to embed_dim, resamples to stage-1 resolution, concatenates,
/// fuses with a 1x1 conv + ReLU and classifies, then resamples logits to input size.
template <typename T>
class Decoder {
 public:
  struct Cache {
    std::array<typename Conv2d<T>::Cache, kNumStages> proj;
    std::array<BilinearResize, kNumStages> up;
    typename Conv2d<T>::Cache fuse;
    Tensor<T> fused;
    typename Conv2d<T>::Cache classify;
    BilinearResize out_resize;
  };

  Decoder() = default;
  explicit Decoder(const NetworkConfig& cfg) : cfg_(cfg) {
    for (int s = 0; s < kNumStages; ++s) {
      proj_[s] = Conv2d<T>("decoder.proj" + std::to_string(s + 1), cfg.widths[s], cfg.embed_dim, 1, 1, 0);
    }
    fuse_ = Conv2d<T>("decoder.fuse", kNumStages * cfg.embed_dim, cfg.embed_dim, 1, 1, 0);
    classify_ = Conv2d<T>("decoder.classify", cfg.embed_dim, cfg.num_classes, 1, 1, 0);
  }

  void init(Rng& rng) {
    for (auto& p : proj_) p.init(rng);
    fuse_.init(rng);
    classify_.init(rng);
  }

  Tensor<T> forward(const std::array<const Tensor<T>*, kNumStages>& feats, int out_h, int out_w,
                    Cache* cache) const {
    const int h1 = feats[0]->height();
    const int w1 = feats[0]->width();
    const int batch = feats[0]->batch();
    const int e = cfg_.embed_dim;
    Tensor<T> cat(batch, kNumStages * e, h1, w1);
    for (int s = 0; s < kNumStages; ++s) {
      Tensor<T> p = proj_[s].forward(*feats[s], cache ? &cache->proj[s] : nullptr);
      BilinearResize up(p.height(), p.width(), h1, w1);
      Tensor<T> u = up.forward(p);
      for (int b = 0; b < batch; ++b) {
        auto src = u.item(b);
        std::copy(src.begin(), src.end(), cat.item(b).data() + static_cast<std::size_t>(s) * e * h1 * w1);
      }
      if (cache) cache->up[s] = std::move(up);
    }
    Tensor<T> fused = fuse_.forward(cat, cache ? &cache->fuse : nullptr);
    relu_inplace(fused);
    Tensor<T> logits_low = classify_.forward(fused, cache ? &cache->classify : nullptr);
    BilinearResize out_resize(h1, w1, out_h, out_w);
    Tensor<T> logits = out_resize.forward(logits_low);
    if (cache) {
      cache->fused = std::move(fused);
      cache->out_resize = std::move(out_resize);
    }
    return logits;
  }

  std::array<Tensor<T>, kNumStages> backward(const Tensor<T>& dlogits, Cache& cache) {
    Tensor<T> dlow = cache.out_resize.backward(dlogits);
    Tensor<T> dfused = classify_.backward(dlow, cache.classify, true);
    relu_backward_inplace(cache.fused, dfused);
    Tensor<T> dcat = fuse_.backward(dfused, cache.fuse, true);
    const int e = cfg_.embed_dim;
    const int h1 = dcat.height();
    const int w1 = dcat.width();
    std::array<Tensor<T>, kNumStages> out;
    for (int s = 0; s < kNumStages; ++s) {
      Tensor<T> du(dcat.batch(), e, h1, w1);
      for (int b = 0; b < dcat.batch(); ++b) {
        const T* src = dcat.item(b).data() + static_cast<std::size_t>(s) * e * h1 * w1;
        std::copy(src, src + static_cast<std::size_t>(e) * h1 * w1, du.item(b).data());
      }
      Tensor<T> dp = cache.up[s].backward(du);
      out[s] = proj_[s].backward(dp, cache.proj[s], true);
    }
    return out;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& p : proj_) {
      out.push_back(&p.weight);
      out.push_back(&p.bias);
    }
    for (auto* conv : {&fuse_, &classify_}) {
      out.push_back(&conv->weight);
      out.push_back(&conv->bias);
    }
    return out;
  }

 private:
  NetworkConfig cfg_;
  std::array<Conv2d<T>, kNumStages> proj_;
  Conv2d<T> fuse_;
  Conv2d<T> classify_;
};

/// Activations of one forward path, kept for backward.
template <typename T>
struct ForwardPass {
  std::array<Tensor<T>, kNumStages> raw;       ///< stage outputs before substitution
  std::array<Tensor<T>, kNumStages> features;  ///< tensors handed to the next stage and the decoder
  std::array<typename Encoder<T>::StageCache, kNumStages> stage_caches;
  typename Decoder<T>::Cache decoder_cache;
  Tensor<T> logits;
  Tensor<T> probs;
  std::vector<int> styled_layers;                    ///< 1-based stage indices
  std::vector<std::vector<StyleStats<T>>> styles;  ///< [styled layer][item]
  double style_eps = kDefaultStyleEps;
};

template <typename T>
class SegNetworkT {
 public:
  SegNetworkT() = default;
  explicit SegNetworkT(const NetworkConfig& cfg) : cfg_(cfg), encoder_(cfg), decoder_(cfg) {}

  void init(Rng& rng) {
    encoder_.init(rng);
    decoder_.init(rng);
  }

  [[nodiscard]] const NetworkConfig& config() const { return cfg_; }
  Encoder<T>& encoder() { return encoder_; }
  const Encoder<T>& encoder() const { return encoder_; }

  /// Source path: all four stage features plus softmax probabilities.
  ForwardPass<T> forward_source(const Tensor<T>& x) const { return run(x, {}, {}, true); }

  /// Style-augmented path: the output of each stage in `layers` (1-based) is re-normalized
  /// to the matching entry of `styles` ([layer][item]) before flowing onward.
  ForwardPass<T> forward_augmented(const Tensor<T>& x, const StyleBatch& styles,
                                   std::span<const int> layers = kDefaultStyledLayers) const {
    if (styles.size() != layers.size()) {
      throw ValidationError("forward_augmented: got styles for " + std::to_string(styles.size()) +
                            " layers, expected " + std::to_string(layers.size()));
    }
    std::vector<std::vector<StyleStats<T>>> cast(styles.size());
    for (std::size_t i = 0; i < styles.size(); ++i) {
      const int layer = layers[i];
      if (layer < 1 || layer > kNumStages) throw ValidationError("forward_augmented: bad styled layer index");
      if (static_cast<int>(styles[i].size()) != x.batch()) {
        throw ValidationError("forward_augmented: need one style per batch item at layer " + std::to_string(layer));
      }
      for (const auto& s : styles[i]) {
        if (s.channels() != cfg_.widths[layer - 1]) {
          throw ValidationError("forward_augmented: style for layer " + std::to_string(layer) + " has " +
                                std::to_string(s.channels()) + " channels, stage has " +
                                std::to_string(cfg_.widths[layer - 1]));
        }
        cast[i].push_back(s.template cast<T>());
      }
    }
    return run(x, std::vector<int>(layers.begin(), layers.end()), std::move(cast), true);
  }

  /// Inference: probabilities from the source path, no caches kept.
  Tensor<T> predict(const Tensor<T>& x) const { return run(x, {}, {}, false).probs; }

  /// Accumulates parameter gradients of one path. `feature_grads`, when given, is added
  /// to dL/d(stage output) of each stage (used by the texture loss on the source path).
  void backward(ForwardPass<T>& pass, const Tensor<T>& dprobs,
                const std::array<Tensor<T>, kNumStages>* feature_grads = nullptr) {
    Tensor<T> dlogits = softmax_backward(pass.probs, dprobs);
    auto dfeat = decoder_.backward(dlogits, pass.decoder_cache);
    for (int s = kNumStages - 1; s >= 0; --s) {
      if (feature_grads && !(*feature_grads)[s].empty()) dfeat[s] += (*feature_grads)[s];
      Tensor<T> draw = std::move(dfeat[s]);
      for (std::size_t i = 0; i < pass.styled_layers.size(); ++i) {
        if (pass.styled_layers[i] == s + 1) {
          draw = substitute_style_backward(pass.raw[s], pass.styles[i], draw, pass.style_eps);
        }
      }
      Tensor<T> dx = encoder_.backward_stage(s, std::move(draw), pass.raw[s], pass.stage_caches[s], s > 0);
      if (s > 0) dfeat[s - 1] += dx;
    }
  }

  std::vector<Parameter<T>*> parameters() {
    auto out = encoder_.parameters();
    for (auto* p : decoder_.parameters()) out.push_back(p);
    return out;
  }
  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    for (auto* p : const_cast<SegNetworkT*>(this)->parameters()) out.push_back(p);
    return out;
  }
  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }
  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  static constexpr std::array<int, 2> kDefaultStyledLayers{1, 2};

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.channels() != cfg_.in_channels) {
      throw ValidationError("network: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                            std::to_string(x.channels()));
    }
    if (x.height() % NetworkConfig::kInputMultiple != 0 || x.width() % NetworkConfig::kInputMultiple != 0 ||
        x.height() == 0 || x.width() == 0) {
      throw ValidationError("network: input size " + x.shape().str() + " must be a positive multiple of " +
                            std::to_string(NetworkConfig::kInputMultiple));
    }
    // ReLU would silently map NaN to 0, so the input is checked before stage 1.
    if (!x.all_finite()) throw NumericError("non-finite input to encoder stage 1");
  }

  ForwardPass<T> run(const Tensor<T>& x, std::vector<int> layers, std::vector<std::vector<StyleStats<T>>> styles,
                     bool keep) const {
    check_input(x);
    ForwardPass<T> pass;
    pass.styled_layers = std::move(layers);
    pass.styles = std::move(styles);
    const Tensor<T>* in = &x;
    for (int s = 0; s < kNumStages; ++s) {
      pass.raw[s] = encoder_.forward_stage(s, *in, keep ? &pass.stage_caches[s] : nullptr);
      bool substituted = false;
      for (std::size_t i = 0; i < pass.styled_layers.size(); ++i) {
        if (pass.styled_layers[i] == s + 1) {
          pass.features[s] = substitute_style(pass.raw[s], pass.styles[i], pass.style_eps);
          substituted = true;
        }
      }
      if (!substituted) pass.features[s] = pass.raw[s];
      in = &pass.features[s];
    }
    pass.logits = decoder_.forward({&pass.features[0], &pass.features[1], &pass.features[2], &pass.features[3]},
                                   x.height(), x.width(), keep ? &pass.decoder_cache : nullptr);
    pass.probs = softmax_channels(pass.logits);
    if (!pass.probs.all_finite()) throw NumericError("non-finite activation at decoder output");
    return pass;
  }

  NetworkConfig cfg_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
};

using SegNetwork = SegNetworkT<float>;

/// Exponential moving average of the online encoder; never trained directly.
template <typename T>
class EmaEncoderT {
 public:
  EmaEncoderT() = default;
  /// Starts as an exact copy of the online encoder.
  explicit EmaEncoderT(const Encoder<T>& online) : shadow_(online) {}

  Encoder<T>& shadow() { return shadow_; }
  const Encoder<T>& shadow() const { return shadow_; }

  /// shadow <- alpha * shadow + (1 - alpha) * online, for every parameter.
  void update(const Encoder<T>& online, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("ema_update: alpha must be in [0,1]");
    auto dst = shadow_.parameters();
    auto src = online.parameters();
    if (dst.size() != src.size()) throw ValidationError("ema_update: parameter layout mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i]->shape != src[i]->shape) {
        throw ValidationError("ema_update: shape mismatch for " + dst[i]->name);
      }
      auto& d = dst[i]->value;
      const auto& s = src[i]->value;
      for (std::size_t j = 0; j < d.size(); ++j) {
        d[j] = static_cast<T>(alpha * static_cast<double>(d[j]) + (1.0 - alpha) * static_cast<double>(s[j]));
      }
    }
  }

  /// Styles of every image of `x` at the given stages (1-based), gradient-free.
  std::vector<LayerStyles> extract_styles(const Tensor<T>& x,
                                          std::span<const int> layers = SegNetworkT<T>::kDefaultStyledLayers) const {
    int deepest = 0;
    for (int l : layers) {
      if (l < 1 || l > kNumStages) throw ValidationError("extract_styles: bad layer index");
      deepest = std::max(deepest, l);
    }
    std::vector<LayerStyles> out(x.batch(), LayerStyles(layers.size()));
    Tensor<T> cur = x;
    for (int s = 0; s < deepest; ++s) {
      cur = shadow_.forward_stage(s, cur, nullptr);
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i] != s + 1) continue;
        auto stats = compute_style(cur, s + 1);
        for (int b = 0; b < x.batch(); ++b) out[b][i] = stats[b].template cast<double>();
      }
    }
    return out;
  }

 private:
  Encoder<T> shadow_;
};

using EmaEncoder = EmaEncoderT<float>;

template <typename T>
void ema_update(EmaEncoderT<T>& ema, const SegNetworkT<T>& net, double alpha) {
  ema.update(net.encoder(), alpha);
}

template <typename T>
std::vector<LayerStyles> extract_realistic_style(const EmaEncoderT<T>& ema, const Tensor<T>& images) {
  return ema.extract_styles(images);
}

}  // namespace stseg
