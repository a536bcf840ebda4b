#pragma once

// Procedural texture fields and labeled off-road scenes.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stseg/rng.hpp"
#include "stseg/tensor.hpp"

namespace stseg {

/// Eight-class traversability taxonomy.
enum class TerrainClass : int {
  kBackground = 0,
  kSmooth = 1,
  kRough = 2,
  kBumpy = 3,
  kSoftVegetation = 4,
  kHardVegetation = 5,
  kPuddle = 6,
  kObstacle = 7,
};
inline constexpr int kNumTerrainClasses = 8;
inline constexpr std::array<const char*, kNumTerrainClasses> kTerrainClassNames = {
    "background", "smooth", "rough", "bumpy", "soft_vegetation", "hard_vegetation", "puddle", "obstacle"};

enum class TextureKind : int {
  kGrass = 0,
  kSoil,
  kRock,
  kGravel,
  kSand,
  kBark,
  // scene-only kinds
  kSky,
  kWater,
  kSmoothGround,
  kFoliage,
  kPaint,
};

/// The six natural-material classes of the texture-classification corpus.
inline constexpr std::array<TextureKind, 6> kCorpusTextures = {TextureKind::kGrass, TextureKind::kSoil,
                                                                TextureKind::kRock,  TextureKind::kGravel,
                                                                TextureKind::kSand,  TextureKind::kBark};
inline constexpr std::array<const char*, 6> kCorpusTextureNames = {"grass", "soil", "rock", "gravel", "sand", "bark"};

using Rgb = std::array<float, 3>;

/// Scalar texture field in [0,1], row-major h*w. `scale` stretches feature sizes.
std::vector<float> texture_field(TextureKind kind, int height, int width, float scale, Rng& rng);

struct Appearance {
  Rgb primary{0.5f, 0.5f, 0.5f};
  Rgb secondary{0.6f, 0.6f, 0.6f};
  float contrast = 1.0f;
  float scale = 1.0f;
};

/// Colored texture patch [1, 3, h, w] in [0,1].
Tensor<float> render_texture(TextureKind kind, const Appearance& look, int height, int width, Rng& rng);

/// One labeled patch of the texture corpus; appearance jittered around the material's palette.
Tensor<float> corpus_patch(int texture_class, int size, Rng& rng);

/// Appearance and layout statistics of one scene domain.
struct DomainStyle {
  std::string tag = "source";
  std::array<Appearance, kNumTerrainClasses> looks{};
  Appearance trunk{};
  float illumination = 1.0f;
  Rgb tint{1.0f, 1.0f, 1.0f};
  float haze = 0.0f;
  float palette_jitter = 0.05f;
  float illumination_jitter = 0.1f;
  float saturation = 1.0f;
  // layout
  float horizon_lo = 0.25f;
  float horizon_hi = 0.42f;
  float trail_width_lo = 0.35f;
  float trail_width_hi = 0.65f;
  float gravel_prob = 0.8f;
  int rocks_max = 3;
  float puddle_prob = 0.8f;
  int trees_max = 3;
  float obstacle_prob = 0.8f;
  float region_roughness = 0.3f;
};

DomainStyle source_domain();
/// Held-out domains with shifted palettes, illumination and region shapes: "T", "D" or "Y".
DomainStyle unseen_domain(const std::string& which);
/// A randomized-palette domain for the unlabeled realistic-image pool.
DomainStyle randomized_domain(Rng& rng);
DomainStyle domain_by_tag(const std::string& tag);

struct SceneConfig {
  int height = 64;
  int width = 64;
  DomainStyle domain = source_domain();
};

/// Image, exact labels, domain tag and seed.
struct SegSample {
  std::string id;
  Tensor<float> image;  ///< [1, 3, H, W] in [0,1]
  LabelMap labels;      ///< [1, H, W] ids in 0..7
  std::string domain_tag;
  std::uint64_t seed = 0;
};

/// Deterministic procedural scene. Throws ValidationError below 32x32.
SegSample generate_scene(std::uint64_t seed, const SceneConfig& config);

}  // namespace stseg
