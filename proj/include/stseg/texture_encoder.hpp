#pragma once

// Texture encoder pre-trained on patch classification and then frozen. Its stage
// features define the texture manifold the segmentation encoder is pulled toward.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stseg/config.hpp"
#include "stseg/dataset.hpp"
#include "stseg/seg_network.hpp"

namespace stseg {

inline constexpr std::uint32_t kTextureCheckpointVersion = 1;


struct TextureCorpus {
  std::vector<std::string> class_names;
  std::vector<Tensor<float>> train_images;
  std::vector<int> train_labels;
  std::vector<Tensor<float>> val_images;
  std::vector<int> val_labels;
};

TextureCorpus make_texture_corpus(const TextureConfig& cfg, std::uint64_t seed);

/// Frozen after construction: only const access to the weights is offered.
class TextureEncoder {
 public:
  struct Meta {
    std::vector<std::string> class_names;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    int epochs = 0;
  };

  TextureEncoder(Encoder<float> encoder, Parameter<float> head_w, Parameter<float> head_b, Normalization norm,
                 Meta meta);

  [[nodiscard]] const NetworkConfig& config() const { return encoder_.config(); }
  [[nodiscard]] const Meta& meta() const { return meta_; }
  [[nodiscard]] const Normalization& normalization() const { return norm_; }
  [[nodiscard]] const Encoder<float>& encoder() const { return encoder_; }

  /// Stage features of images in [0,1].
  [[nodiscard]] std::array<Tensor<float>, kNumStages> features(const Tensor<float>& images) const;
  /// Class logits [B, classes, 1, 1].
  [[nodiscard]] Tensor<float> logits(const Tensor<float>& images) const;

  void save(const std::string& path) const;
  static TextureEncoder load(const std::string& path);

 private:
  Encoder<float> encoder_;
  Parameter<float> head_w_;  ///< [classes, widths[3]]
  Parameter<float> head_b_;
  Normalization norm_;
  Meta meta_;
};

struct PretrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_val_accuracy;
};

/// Trains on the corpus and throws TrainingError (with per-class diagnostics) when the
/// held-out accuracy stays below cfg.min_accuracy.
TextureEncoder pretrain_texture_encoder(const TextureConfig& cfg, const NetworkConfig& net, std::uint64_t seed,
                                        PretrainLog* log = nullptr);

/// Held-out accuracy and per-class accuracy of an encoder on labeled patches.
double classification_accuracy(const TextureEncoder& enc, const std::vector<Tensor<float>>& images,
                               const std::vector<int>& labels, std::vector<double>* per_class = nullptr);

/// F_t: stage features of the frozen encoder, aligned with the segmentation stages.
std::array<Tensor<float>, kNumStages> extract_manifold(const TextureEncoder& enc, const Tensor<float>& images);

}  // namespace stseg
