#include "stseg/procedural.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stseg/error.hpp"

namespace stseg {
namespace {

float smoothstep(float t) { return t * t * (3.0f - 2.0f * t); }
float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }
float uniform(Rng& rng, float lo, float hi) { return lo + static_cast<float>(uniform01(rng)) * (hi - lo); }

// Lattice value noise in [0,1] with smooth interpolation and a random phase.
std::vector<float> value_noise(int h, int w, float cell_y, float cell_x, Rng& rng) {
  cell_y = std::max(cell_y, 0.5f);
  cell_x = std::max(cell_x, 0.5f);
  const int gh = static_cast<int>(std::ceil(h / cell_y)) + 3;
  const int gw = static_cast<int>(std::ceil(w / cell_x)) + 3;
  std::vector<float> grid(static_cast<std::size_t>(gh) * gw);
  for (auto& g : grid) g = static_cast<float>(uniform01(rng));
  const float oy = static_cast<float>(uniform01(rng));
  const float ox = static_cast<float>(uniform01(rng));
  std::vector<float> out(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h; ++i) {
    const float gy = i / cell_y + oy;
    const int y0 = static_cast<int>(gy);
    const float fy = smoothstep(gy - y0);
    for (int j = 0; j < w; ++j) {
      const float gx = j / cell_x + ox;
      const int x0 = static_cast<int>(gx);
      const float fx = smoothstep(gx - x0);
      const float a = grid[y0 * gw + x0];
      const float b = grid[y0 * gw + x0 + 1];
      const float c = grid[(y0 + 1) * gw + x0];
      const float d = grid[(y0 + 1) * gw + x0 + 1];
      out[static_cast<std::size_t>(i) * w + j] = (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
    }
  }
  return out;
}

std::vector<float> fractal_noise(int h, int w, float cell_y, float cell_x, int octaves, float persistence, Rng& rng) {
  std::vector<float> acc(static_cast<std::size_t>(h) * w, 0.0f);
  float amp = 1.0f;
  float norm = 0.0f;
  for (int o = 0; o < octaves; ++o) {
    const auto layer = value_noise(h, w, cell_y, cell_x, rng);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += amp * layer[i];
    norm += amp;
    amp *= persistence;
    cell_y *= 0.5f;
    cell_x *= 0.5f;
  }
  for (auto& v : acc) v /= norm;
  return acc;
}

struct Voronoi {
  std::vector<float> f1;
  std::vector<float> f2;
  std::vector<float> cell_value;
};

// Jittered-grid Worley noise: nearest / second-nearest distances in pixels and a random
// value per cell.
Voronoi voronoi(int h, int w, float cell, Rng& rng) {
  cell = std::max(cell, 1.0f);
  const int gh = static_cast<int>(std::ceil(h / cell)) + 2;
  const int gw = static_cast<int>(std::ceil(w / cell)) + 2;
  std::vector<float> px(static_cast<std::size_t>(gh) * gw), py(px.size()), val(px.size());
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const std::size_t k = static_cast<std::size_t>(gy) * gw + gx;
      py[k] = (gy - 1 + static_cast<float>(uniform01(rng))) * cell;
      px[k] = (gx - 1 + static_cast<float>(uniform01(rng))) * cell;
      val[k] = static_cast<float>(uniform01(rng));
    }
  }
  Voronoi out;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  out.f1.resize(n);
  out.f2.resize(n);
  out.cell_value.resize(n);
  for (int i = 0; i < h; ++i) {
    const int cy = static_cast<int>(i / cell) + 1;
    for (int j = 0; j < w; ++j) {
      const int cx = static_cast<int>(j / cell) + 1;
      float d1 = 1e30f, d2 = 1e30f, v = 0.0f;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int gy = std::clamp(cy + dy, 0, gh - 1);
          const int gx = std::clamp(cx + dx, 0, gw - 1);
          const std::size_t k = static_cast<std::size_t>(gy) * gw + gx;
          const float d = std::hypot(py[k] - i, px[k] - j);
          if (d < d1) {
            d2 = d1;
            d1 = d;
            v = val[k];
          } else if (d < d2) {
            d2 = d;
          }
        }
      }
      const std::size_t idx = static_cast<std::size_t>(i) * w + j;
      out.f1[idx] = d1;
      out.f2[idx] = d2;
      out.cell_value[idx] = v;
    }
  }
  return out;
}

Rgb jitter(const Rgb& c, float amount, Rng& rng) {
  Rgb out = c;
  const float shared = uniform(rng, -amount, amount);
  for (auto& v : out) v = clamp01(v + shared + uniform(rng, -amount, amount) * 0.5f);
  return out;
}

Rgb desaturate(const Rgb& c, float saturation) {
  const float gray = 0.299f * c[0] + 0.587f * c[1] + 0.114f * c[2];
  return {gray + saturation * (c[0] - gray), gray + saturation * (c[1] - gray), gray + saturation * (c[2] - gray)};
}

}  // namespace

std::vector<float> texture_field(TextureKind kind, int h, int w, float s, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<float> t(n, 0.5f);
  switch (kind) {
    case TextureKind::kGrass: {
      // Thin vertical blades over coarse patches.
      const auto blades = fractal_noise(h, w, 7.0f * s, 1.0f * s, 2, 0.5f, rng);
      const auto patches = value_noise(h, w, 12.0f * s, 12.0f * s, rng);
      for (std::size_t i = 0; i < n; ++i) t[i] = 0.7f * blades[i] + 0.3f * patches[i];
      break;
    }
    case TextureKind::kSoil: {
      const auto f = fractal_noise(h, w, 6.0f * s, 6.0f * s, 3, 0.6f, rng);
      for (std::size_t i = 0; i < n; ++i) t[i] = f[i];
      break;
    }
    case TextureKind::kRock: {
      const auto v = voronoi(h, w, 14.0f * s, rng);
      const auto grain = fractal_noise(h, w, 4.0f * s, 4.0f * s, 2, 0.5f, rng);
      for (std::size_t i = 0; i < n; ++i) {
        const float crack = std::clamp((v.f2[i] - v.f1[i]) / (1.6f * s), 0.0f, 1.0f);
        t[i] = (0.55f * v.cell_value[i] + 0.45f * grain[i]) * (0.25f + 0.75f * crack);
      }
      break;
    }
    case TextureKind::kGravel: {
      const auto v = voronoi(h, w, 3.5f * s, rng);
      for (std::size_t i = 0; i < n; ++i) {
        const float edge = std::clamp((v.f2[i] - v.f1[i]) / (0.9f * s), 0.0f, 1.0f);
        t[i] = (0.2f + 0.8f * v.cell_value[i]) * (0.3f + 0.7f * edge);
      }
      break;
    }
    case TextureKind::kSand: {
      const auto wave = value_noise(h, w, 16.0f * s, 16.0f * s, rng);
      const float angle = uniform(rng, -0.4f, 0.4f);
      const float period = 6.0f * s;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const std::size_t k = static_cast<std::size_t>(i) * w + j;
          const float coord = i * std::cos(angle) + j * std::sin(angle) + 4.0f * wave[k];
          const float ripple = 0.5f + 0.5f * std::sin(2.0f * std::numbers::pi_v<float> * coord / period);
          t[k] = 0.35f + 0.35f * ripple + 0.3f * static_cast<float>(uniform01(rng));
        }
      }
      break;
    }
    case TextureKind::kBark: {
      const auto streaks = fractal_noise(h, w, 16.0f * s, 1.5f * s, 2, 0.5f, rng);
      for (std::size_t i = 0; i < n; ++i) t[i] = std::clamp(std::fabs(2.0f * streaks[i] - 1.0f) * 1.6f, 0.0f, 1.0f);
      break;
    }
    case TextureKind::kSky: {
      const auto clouds = fractal_noise(h, w, 20.0f * s, 32.0f * s, 3, 0.5f, rng);
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const std::size_t k = static_cast<std::size_t>(i) * w + j;
          t[k] = clamp01(0.6f * static_cast<float>(i) / h + 0.5f * smoothstep(clamp01(clouds[k] * 1.6f - 0.5f)));
        }
      }
      break;
    }
    case TextureKind::kWater: {
      const auto shimmer = value_noise(h, w, 2.0f * s, 9.0f * s, rng);
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const std::size_t k = static_cast<std::size_t>(i) * w + j;
          t[k] = clamp01(0.4f + 0.2f * std::sin(i * 1.3f / s) + 0.35f * (shimmer[k] - 0.5f));
        }
      }
      break;
    }
    case TextureKind::kSmoothGround: {
      const auto broad = fractal_noise(h, w, 24.0f * s, 24.0f * s, 2, 0.5f, rng);
      const auto fine = value_noise(h, w, 1.5f, 1.5f, rng);
      for (std::size_t i = 0; i < n; ++i) t[i] = 0.75f * broad[i] + 0.25f * fine[i];
      break;
    }
    case TextureKind::kFoliage: {
      const auto v = voronoi(h, w, 2.5f * s, rng);
      const auto clumps = value_noise(h, w, 10.0f * s, 10.0f * s, rng);
      for (std::size_t i = 0; i < n; ++i) {
        t[i] = clamp01(0.5f * v.cell_value[i] + 0.5f * clumps[i] - 0.25f * std::clamp(v.f1[i] / (2.0f * s), 0.0f, 1.0f) + 0.1f);
      }
      break;
    }
    case TextureKind::kPaint: {
      const float period = uniform(rng, 3.0f, 6.0f) * s;
      const bool diagonal = uniform01(rng) < 0.5;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const float coord = diagonal ? (i + j) / period : i / period;
          t[static_cast<std::size_t>(i) * w + j] = (static_cast<int>(std::floor(coord)) % 2 == 0) ? 0.1f : 0.9f;
        }
      }
      break;
    }
  }
  return t;
}

Tensor<float> render_texture(TextureKind kind, const Appearance& look, int h, int w, Rng& rng) {
  const auto field = texture_field(kind, h, w, look.scale, rng);
  Tensor<float> out(1, 3, h, w);
  for (int c = 0; c < 3; ++c) {
    auto dst = out.plane(0, c);
    for (std::size_t i = 0; i < field.size(); ++i) {
      const float t = clamp01(0.5f + look.contrast * (field[i] - 0.5f));
      dst[i] = clamp01(look.primary[c] * (1.0f - t) + look.secondary[c] * t);
    }
  }
  return out;
}

namespace {

Appearance corpus_look(int texture_class) {
  switch (kCorpusTextures.at(texture_class)) {
    case TextureKind::kGrass: return {{0.16f, 0.36f, 0.09f}, {0.46f, 0.70f, 0.24f}, 1.2f, 1.0f};
    case TextureKind::kSoil: return {{0.30f, 0.21f, 0.13f}, {0.55f, 0.42f, 0.30f}, 1.1f, 1.0f};
    case TextureKind::kRock: return {{0.22f, 0.22f, 0.23f}, {0.66f, 0.65f, 0.63f}, 1.2f, 1.0f};
    case TextureKind::kGravel: return {{0.28f, 0.26f, 0.24f}, {0.74f, 0.70f, 0.64f}, 1.2f, 1.0f};
    case TextureKind::kSand: return {{0.66f, 0.58f, 0.42f}, {0.86f, 0.80f, 0.64f}, 1.0f, 1.0f};
    case TextureKind::kBark: return {{0.14f, 0.09f, 0.05f}, {0.42f, 0.31f, 0.20f}, 1.2f, 1.0f};
    default: return {};
  }
}

}  // namespace

Tensor<float> corpus_patch(int texture_class, int size, Rng& rng) {
  if (texture_class < 0 || texture_class >= static_cast<int>(kCorpusTextures.size())) {
    throw ValidationError("corpus_patch: unknown texture class");
  }
  Appearance look = corpus_look(texture_class);
  look.primary = jitter(look.primary, 0.08f, rng);
  look.secondary = jitter(look.secondary, 0.08f, rng);
  look.contrast *= uniform(rng, 0.8f, 1.2f);
  look.scale = uniform(rng, 0.8f, 1.25f);
  return render_texture(kCorpusTextures[texture_class], look, size, size, rng);
}

DomainStyle source_domain() {
  DomainStyle d;
  d.tag = "source";
  d.looks[0] = {{0.42f, 0.60f, 0.88f}, {0.86f, 0.90f, 0.97f}, 1.0f, 1.0f};  // sky
  d.looks[1] = {{0.52f, 0.43f, 0.32f}, {0.66f, 0.57f, 0.45f}, 0.8f, 1.0f};  // trail
  d.looks[2] = {{0.30f, 0.28f, 0.26f}, {0.72f, 0.69f, 0.64f}, 1.1f, 1.0f};  // gravel
  d.looks[3] = {{0.24f, 0.24f, 0.25f}, {0.62f, 0.61f, 0.60f}, 1.1f, 1.0f};  // rocks
  d.looks[4] = {{0.17f, 0.38f, 0.09f}, {0.45f, 0.68f, 0.22f}, 1.1f, 1.0f};  // grass
  d.looks[5] = {{0.07f, 0.18f, 0.05f}, {0.22f, 0.40f, 0.12f}, 1.2f, 1.0f};  // foliage
  d.looks[6] = {{0.18f, 0.24f, 0.31f}, {0.52f, 0.62f, 0.74f}, 1.0f, 1.0f};  // water
  d.looks[7] = {{0.78f, 0.22f, 0.10f}, {0.92f, 0.86f, 0.22f}, 1.0f, 1.0f};  // obstacle
  d.trunk = {{0.14f, 0.09f, 0.05f}, {0.40f, 0.30f, 0.19f}, 1.2f, 1.0f};
  return d;
}

DomainStyle unseen_domain(const std::string& which) {
  DomainStyle d = source_domain();
  if (which == "T") {
    // dry season: yellowed vegetation, reddish soil, bright hazy light, wider trails
    d.tag = "T";
    d.looks[0] = {{0.62f, 0.68f, 0.80f}, {0.92f, 0.92f, 0.90f}, 0.8f, 1.0f};
    d.looks[1] = {{0.62f, 0.38f, 0.24f}, {0.78f, 0.52f, 0.36f}, 0.9f, 1.0f};
    d.looks[3] = {{0.34f, 0.26f, 0.20f}, {0.70f, 0.58f, 0.46f}, 1.2f, 1.3f};
    d.looks[4] = {{0.42f, 0.40f, 0.14f}, {0.72f, 0.64f, 0.30f}, 1.0f, 1.3f};
    d.looks[5] = {{0.22f, 0.24f, 0.08f}, {0.46f, 0.44f, 0.18f}, 1.2f, 1.2f};
    d.illumination = 1.1f;
    d.tint = {1.05f, 1.0f, 0.88f};
    d.haze = 0.1f;
    d.trail_width_lo = 0.5f;
    d.trail_width_hi = 0.85f;
    d.rocks_max = 5;
    d.region_roughness = 0.45f;
  } else if (which == "D") {
    // dusk in dense forest: dim orange light, more trees, higher horizon
    d.tag = "D";
    d.illumination = 0.55f;
    d.tint = {1.15f, 0.85f, 0.65f};
    d.looks[4] = {{0.08f, 0.26f, 0.10f}, {0.26f, 0.50f, 0.20f}, 1.3f, 0.8f};
    d.looks[5] = {{0.04f, 0.12f, 0.06f}, {0.16f, 0.30f, 0.12f}, 1.3f, 0.8f};
    d.trees_max = 6;
    d.horizon_lo = 0.15f;
    d.horizon_hi = 0.30f;
    d.trail_width_lo = 0.2f;
    d.trail_width_hi = 0.45f;
  } else if (which == "Y") {
    // overcast: washed-out colors, bluish haze, gravel-heavy terrain
    d.tag = "Y";
    d.saturation = 0.45f;
    d.haze = 0.25f;
    d.tint = {0.9f, 0.96f, 1.08f};
    d.illumination = 0.95f;
    d.looks[2] = {{0.34f, 0.33f, 0.32f}, {0.80f, 0.78f, 0.75f}, 1.3f, 0.8f};
    d.gravel_prob = 1.0f;
    d.puddle_prob = 0.9f;
    d.trees_max = 2;
    d.horizon_lo = 0.3f;
    d.horizon_hi = 0.5f;
    d.region_roughness = 0.15f;
  } else {
    throw ValidationError("unknown unseen domain '" + which + "' (expected T, D or Y)");
  }
  return d;
}

DomainStyle randomized_domain(Rng& rng) {
  DomainStyle d = source_domain();
  d.tag = "realistic";
  auto random_color = [&rng]() { return Rgb{uniform(rng, 0.05f, 0.95f), uniform(rng, 0.05f, 0.95f), uniform(rng, 0.05f, 0.95f)}; };
  for (auto& look : d.looks) {
    if (uniform01(rng) < 0.6) {
      look.primary = random_color();
      look.secondary = jitter(look.primary, 0.3f, rng);
    } else {
      look.primary = jitter(look.primary, 0.2f, rng);
      look.secondary = jitter(look.secondary, 0.2f, rng);
    }
    look.contrast = uniform(rng, 0.4f, 1.8f);
    look.scale = uniform(rng, 0.6f, 1.6f);
  }
  d.illumination = uniform(rng, 0.4f, 1.4f);
  d.tint = {uniform(rng, 0.75f, 1.25f), uniform(rng, 0.75f, 1.25f), uniform(rng, 0.75f, 1.25f)};
  d.haze = uniform(rng, 0.0f, 0.35f);
  d.saturation = uniform(rng, 0.3f, 1.3f);
  d.horizon_lo = uniform(rng, 0.1f, 0.35f);
  d.horizon_hi = d.horizon_lo + uniform(rng, 0.05f, 0.25f);
  d.trees_max = uniform_int(rng, 7);
  d.rocks_max = uniform_int(rng, 6);
  return d;
}

DomainStyle domain_by_tag(const std::string& tag) {
  if (tag == "source") return source_domain();
  return unseen_domain(tag);
}

namespace {

struct Canvas {
  int h;
  int w;
  LabelMap labels;
};

// Ellipse with a noise-perturbed boundary.
template <typename Fn>
void paint_blob(Canvas& cv, float cy, float cx, float ry, float rx, float roughness, const std::vector<float>& noise,
                Fn&& allow, int cls) {
  const int i0 = std::max(0, static_cast<int>(cy - ry * 1.5f));
  const int i1 = std::min(cv.h - 1, static_cast<int>(cy + ry * 1.5f));
  const int j0 = std::max(0, static_cast<int>(cx - rx * 1.5f));
  const int j1 = std::min(cv.w - 1, static_cast<int>(cx + rx * 1.5f));
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      const float dy = (i - cy) / ry;
      const float dx = (j - cx) / rx;
      const float r = dy * dy + dx * dx;
      const float wobble = roughness * (noise[static_cast<std::size_t>(i) * cv.w + j] - 0.5f) * 2.0f;
      if (r < 1.0f + wobble && allow(cv.labels(0, i, j))) cv.labels(0, i, j) = cls;
    }
  }
}

}  // namespace

SegSample generate_scene(std::uint64_t seed, const SceneConfig& config) {
  const int h = config.height;
  const int w = config.width;
  if (h < 32 || w < 32) throw ValidationError("generate_scene: resolution must be at least 32x32");
  const DomainStyle& dom = config.domain;
  Rng rng(seed);
  Canvas cv{h, w, LabelMap(1, h, w, static_cast<int>(TerrainClass::kSoftVegetation))};
  const auto shape_noise = value_noise(h, w, 5.0f, 5.0f, rng);
  const auto cls = [](TerrainClass c) { return static_cast<int>(c); };

  // Horizon with a gentle wave; sky above.
  const float horizon = h * uniform(rng, dom.horizon_lo, dom.horizon_hi);
  const float amp = uniform(rng, 0.0f, 0.05f) * h;
  const float phase = uniform(rng, 0.0f, 6.28f);
  const float period = uniform(rng, 0.5f, 1.5f) * w;
  std::vector<float> hz(w);
  for (int j = 0; j < w; ++j) hz[j] = horizon + amp * std::sin(6.2831853f * j / period + phase);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (i < hz[j]) cv.labels(0, i, j) = cls(TerrainClass::kBackground);
    }
  }

  // Trail converging to a vanishing point, gravel shoulders.
  const float vx = w * uniform(rng, 0.3f, 0.7f);
  const float bx = w * uniform(rng, 0.2f, 0.8f);
  const float bend = w * uniform(rng, -0.15f, 0.15f);
  const float half_bottom = 0.5f * w * uniform(rng, dom.trail_width_lo, dom.trail_width_hi);
  const bool shoulders = uniform01(rng) < dom.gravel_prob;
  const float shoulder_w = uniform(rng, 0.25f, 0.6f);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (i < hz[j]) continue;
      const float t = (i - horizon) / std::max(1.0f, h - horizon);
      if (t <= 0.0f) continue;
      const float center = vx + t * (bx - vx) + bend * std::sin(3.14159f * t);
      const float half = 0.5f + t * half_bottom;
      const float d = std::fabs(j - center) + dom.region_roughness * 3.0f * (shape_noise[i * w + j] - 0.5f);
      if (d < half) {
        cv.labels(0, i, j) = cls(TerrainClass::kSmooth);
      } else if (shoulders && d < half * (1.0f + shoulder_w) + 1.0f) {
        cv.labels(0, i, j) = cls(TerrainClass::kRough);
      }
    }
  }
  const auto ground = [&](int l) { return l != 0; };
  const auto any = [](int) { return true; };

  // Gravel patches off the trail.
  if (uniform01(rng) < dom.gravel_prob * 0.6) {
    const float cy = uniform(rng, horizon + 4, static_cast<float>(h - 2));
    paint_blob(cv, cy, uniform(rng, 0.0f, static_cast<float>(w)), uniform(rng, 3.0f, 8.0f), uniform(rng, 5.0f, 14.0f),
               dom.region_roughness, shape_noise, [&](int l) { return l == cls(TerrainClass::kSoftVegetation); },
               cls(TerrainClass::kRough));
  }

  // Rocks.
  const int rocks = 1 + uniform_int(rng, std::max(1, dom.rocks_max));
  for (int r = 0; r < rocks; ++r) {
    const float cy = uniform(rng, horizon + 2, static_cast<float>(h));
    const float size = uniform(rng, 2.5f, 7.0f) * (0.5f + (cy - horizon) / (h - horizon));
    paint_blob(cv, cy, uniform(rng, 0.0f, static_cast<float>(w)), size * 0.8f, size * 1.2f, dom.region_roughness,
               shape_noise, ground, cls(TerrainClass::kBumpy));
  }

  // Puddles on the trail.
  if (uniform01(rng) < dom.puddle_prob) {
    const int count = 1 + uniform_int(rng, 2);
    for (int p = 0; p < count; ++p) {
      const float cy = uniform(rng, horizon + (h - horizon) * 0.3f, static_cast<float>(h - 2));
      const float t = (cy - horizon) / (h - horizon);
      const float center = vx + t * (bx - vx) + bend * std::sin(3.14159f * t);
      paint_blob(cv, cy, center + uniform(rng, -4.0f, 4.0f), uniform(rng, 1.5f, 4.5f) * (0.5f + t),
                 uniform(rng, 5.0f, 11.0f) * (0.5f + t), dom.region_roughness * 0.5f, shape_noise,
                 [&](int l) { return l == cls(TerrainClass::kSmooth) || l == cls(TerrainClass::kRough); },
                 cls(TerrainClass::kPuddle));
    }
  }

  // Obstacles: posts, boxes or barriers standing on the ground.
  if (uniform01(rng) < dom.obstacle_prob) {
    const int count = 1 + uniform_int(rng, 2);
    for (int o = 0; o < count; ++o) {
      const float base = uniform(rng, horizon + 4, static_cast<float>(h));
      const float t = (base - horizon) / (h - horizon);
      const float bw = uniform(rng, 2.0f, 9.0f) * (0.5f + t);
      const float bh = uniform(rng, 4.0f, 12.0f) * (0.5f + t);
      const float left = uniform(rng, 0.0f, w - bw);
      for (int i = std::max(0, static_cast<int>(base - bh)); i < std::min(h, static_cast<int>(base)); ++i) {
        for (int j = std::max(0, static_cast<int>(left)); j < std::min(w, static_cast<int>(left + bw)); ++j) {
          cv.labels(0, i, j) = cls(TerrainClass::kObstacle);
        }
      }
    }
  }

  // Trees: trunk from the ground plus a canopy crossing the horizon; bushes on the ground.
  std::vector<unsigned char> trunk(static_cast<std::size_t>(h) * w, 0);
  const int trees = uniform_int(rng, dom.trees_max + 1);
  for (int k = 0; k < trees; ++k) {
    const float tx = uniform(rng, 0.0f, static_cast<float>(w));
    const float foot = std::min(static_cast<float>(h), horizon + uniform(rng, 2.0f, 14.0f));
    const float tw = uniform(rng, 1.5f, 3.5f);
    const float canopy_y = horizon - uniform(rng, 4.0f, 14.0f);
    for (int i = std::max(0, static_cast<int>(canopy_y)); i < static_cast<int>(foot); ++i) {
      for (int j = std::max(0, static_cast<int>(tx - tw)); j < std::min(w, static_cast<int>(tx + tw)); ++j) {
        cv.labels(0, i, j) = cls(TerrainClass::kHardVegetation);
        trunk[static_cast<std::size_t>(i) * w + j] = 1;
      }
    }
    paint_blob(cv, canopy_y, tx, uniform(rng, 4.0f, 10.0f), uniform(rng, 5.0f, 12.0f), dom.region_roughness + 0.2f,
               shape_noise, any, cls(TerrainClass::kHardVegetation));
  }
  if (uniform01(rng) < 0.5) {
    const float cy = uniform(rng, horizon + 2, static_cast<float>(h));
    paint_blob(cv, cy, uniform(rng, 0.0f, static_cast<float>(w)), uniform(rng, 2.0f, 5.0f), uniform(rng, 3.0f, 7.0f),
               dom.region_roughness + 0.2f, shape_noise,
               [&](int l) { return l == cls(TerrainClass::kSoftVegetation); }, cls(TerrainClass::kHardVegetation));
  }

  // Per-class texture layers composited through the labels.
  static constexpr std::array<TextureKind, kNumTerrainClasses> kKinds = {
      TextureKind::kSky,   TextureKind::kSmoothGround, TextureKind::kGravel, TextureKind::kRock,
      TextureKind::kGrass, TextureKind::kFoliage,      TextureKind::kWater,  TextureKind::kPaint};
  const float gain = dom.illumination * (1.0f + uniform(rng, -dom.illumination_jitter, dom.illumination_jitter));
  std::array<Tensor<float>, kNumTerrainClasses> layers;
  for (int c = 0; c < kNumTerrainClasses; ++c) {
    Appearance look = dom.looks[c];
    look.primary = desaturate(jitter(look.primary, dom.palette_jitter, rng), dom.saturation);
    look.secondary = desaturate(jitter(look.secondary, dom.palette_jitter, rng), dom.saturation);
    layers[c] = render_texture(kKinds[c], look, h, w, rng);
  }
  Appearance trunk_look = dom.trunk;
  trunk_look.primary = desaturate(trunk_look.primary, dom.saturation);
  trunk_look.secondary = desaturate(trunk_look.secondary, dom.saturation);
  const Tensor<float> bark = render_texture(TextureKind::kBark, trunk_look, h, w, rng);

  SegSample s;
  s.seed = seed;
  s.domain_tag = dom.tag;
  s.image = Tensor<float>(1, 3, h, w);
  for (int i = 0; i < h; ++i) {
    // mild vertical falloff toward the camera
    const float shade = gain * (1.0f - 0.15f * static_cast<float>(i) / h);
    for (int j = 0; j < w; ++j) {
      const int l = cv.labels(0, i, j);
      const bool is_trunk = l == cls(TerrainClass::kHardVegetation) && trunk[static_cast<std::size_t>(i) * w + j];
      const Tensor<float>& src = is_trunk ? bark : layers[l];
      for (int c = 0; c < 3; ++c) {
        float v = src(0, c, i, j) * shade * dom.tint[c];
        v = v * (1.0f - dom.haze) + dom.haze * 0.85f;
        s.image(0, c, i, j) = clamp01(v);
      }
    }
  }
  s.labels = std::move(cv.labels);
  return s;
}

}  // namespace stseg
