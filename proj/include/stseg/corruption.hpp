#pragma once

// Image corruptions with five severity levels, following the parameter conventions of
// the common-corruptions benchmark (CIFAR-sized variant). Frost uses a procedural
// overlay instead of photographs.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "stseg/rng.hpp"
#include "stseg/tensor.hpp"

namespace stseg {

enum class CorruptionKind : int {
  kBrightness = 0,
  kContrast,
  kDefocusBlur,
  kMotionBlur,
  kImpulseNoise,
  kGaussianNoise,
  kSnowNoise,
  kFrostLens,
};
inline constexpr int kNumCorruptionKinds = 8;
inline constexpr int kNumSeverities = 5;

/// Column order of the robustness table.
inline constexpr std::array<CorruptionKind, kNumCorruptionKinds> kAllCorruptions = {
    CorruptionKind::kBrightness,   CorruptionKind::kContrast,      CorruptionKind::kDefocusBlur,
    CorruptionKind::kMotionBlur,   CorruptionKind::kImpulseNoise,  CorruptionKind::kGaussianNoise,
    CorruptionKind::kSnowNoise,    CorruptionKind::kFrostLens};

std::string_view corruption_name(CorruptionKind kind);
/// Display label used in tables and plots, e.g. "Defocus-blur".
std::string_view corruption_label(CorruptionKind kind);
/// Parses names such as "motion_blur"; throws ValidationError on unknown names.
CorruptionKind corruption_from_name(std::string_view name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 1;
  std::uint64_t seed = 0;

  bool operator==(const CorruptionSpec&) const = default;
};

void validate(const CorruptionSpec& spec);

// Severity tables, index = severity - 1.
inline constexpr std::array<double, 5> kGaussianNoiseStd{0.04, 0.06, 0.08, 0.09, 0.10};
inline constexpr std::array<double, 5> kImpulseAmount{0.01, 0.02, 0.03, 0.05, 0.07};
inline constexpr std::array<double, 5> kBrightnessShift{0.05, 0.1, 0.15, 0.2, 0.3};
inline constexpr std::array<double, 5> kContrastFactor{0.75, 0.5, 0.4, 0.3, 0.15};
struct DefocusParams {
  double radius;
  double alias_blur;
};
inline constexpr std::array<DefocusParams, 5> kDefocus{{{0.3, 0.4}, {0.4, 0.5}, {0.5, 0.6}, {1.0, 0.2}, {1.5, 0.1}}};
struct MotionParams {
  double radius;
  double sigma;
};
inline constexpr std::array<MotionParams, 5> kMotion{{{10, 1.0}, {10, 1.5}, {10, 2.0}, {10, 2.5}, {12, 3.0}}};
struct SnowParams {
  double loc;
  double scale;
  double zoom;
  double threshold;
  double motion_radius;
  double motion_sigma;
  double blend;
};
inline constexpr std::array<SnowParams, 5> kSnow{{{0.1, 0.2, 1.0, 0.6, 8, 3, 0.95},
                                                  {0.1, 0.2, 1.0, 0.5, 10, 4, 0.9},
                                                  {0.15, 0.3, 1.75, 0.55, 10, 4, 0.9},
                                                  {0.25, 0.3, 2.25, 0.6, 12, 6, 0.85},
                                                  {0.3, 0.3, 1.25, 0.65, 14, 12, 0.8}}};
struct FrostParams {
  double image_weight;
  double frost_weight;
};
// Image weights follow the reference table; frost weights rise at every level so the
// deviation from the clean image grows with severity.
inline constexpr std::array<FrostParams, 5> kFrost{{{1.0, 0.2}, {1.0, 0.3}, {0.9, 0.45}, {0.85, 0.55}, {0.75, 0.7}}};

/// Applies `spec` to every item of an image batch [B, 3, H, W] in [0,1]. Output is
/// clipped to [0,1] and depends only on the inputs (randomness comes from spec.seed).
Tensor<float> corrupt(const Tensor<float>& image, const CorruptionSpec& spec);

// Parameter-level building blocks (single item or batch; values clipped to [0,1]).
Tensor<float> gaussian_noise(const Tensor<float>& image, double std, Rng& rng);
Tensor<float> impulse_noise(const Tensor<float>& image, double amount, Rng& rng);
Tensor<float> brightness(const Tensor<float>& image, double shift);
Tensor<float> contrast(const Tensor<float>& image, double factor);
Tensor<float> defocus_blur(const Tensor<float>& image, double radius, double alias_blur);
Tensor<float> motion_blur(const Tensor<float>& image, double radius, double sigma, double angle_deg);
Tensor<float> snow_noise(const Tensor<float>& image, const SnowParams& p, Rng& rng);
Tensor<float> frost_lens(const Tensor<float>& image, const FrostParams& p, Rng& rng);

/// Procedural ice-crystal overlay, 3 channels in [0,1].
Tensor<float> frost_overlay(int height, int width, Rng& rng);

}  // namespace stseg
