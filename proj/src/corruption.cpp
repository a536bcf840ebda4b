#include "stseg/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "stseg/error.hpp"
#include "stseg/procedural.hpp"

namespace stseg {
namespace {

constexpr std::array<std::string_view, kNumCorruptionKinds> kNames = {
    "brightness", "contrast", "defocus_blur", "motion_blur", "impulse_noise", "gaussian_noise", "snow_noise", "frost_lens"};
constexpr std::array<std::string_view, kNumCorruptionKinds> kLabels = {
    "Brightness", "Contrast", "Defocus-blur", "Motion-blur", "Impulse-noise", "Gaussian-noise", "Snow-noise", "Frost-lens"};

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void check_image(const Tensor<float>& image) {
  if (image.channels() != 3) throw ValidationError("corrupt: expected a 3-channel image, got " + image.shape().str());
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// 2-D correlation of each plane with an odd square kernel, reflect-101 borders.
Tensor<float> filter2d(const Tensor<float>& image, const std::vector<double>& kernel, int ksize) {
  const int r = ksize / 2;
  const int h = image.height();
  const int w = image.width();
  Tensor<float> out(image.shape());
  for (int b = 0; b < image.batch(); ++b) {
    for (int c = 0; c < image.channels(); ++c) {
      const auto src = image.plane(b, c);
      auto dst = out.plane(b, c);
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          double acc = 0.0;
          for (int ki = -r; ki <= r; ++ki) {
            const int si = reflect101(i + ki, h);
            for (int kj = -r; kj <= r; ++kj) {
              const double k = kernel[static_cast<std::size_t>(ki + r) * ksize + (kj + r)];
              if (k != 0.0) acc += k * src[static_cast<std::size_t>(si) * w + reflect101(j + kj, w)];
            }
          }
          dst[static_cast<std::size_t>(i) * w + j] = clip01(acc);
        }
      }
    }
  }
  return out;
}

// One-sided Gaussian-weighted streak along `angle_deg`, integer offsets, clamped edges.
std::vector<float> motion_plane(std::span<const float> src, int h, int w, double radius, double sigma,
                                double angle_deg) {
  const int width = 2 * static_cast<int>(std::ceil(radius)) + 1;
  std::vector<double> weights(width);
  double total = 0.0;
  for (int i = 0; i < width; ++i) {
    weights[i] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    total += weights[i];
  }
  const double theta = angle_deg * std::numbers::pi / 180.0;
  std::vector<int> dx(width), dy(width);
  for (int i = 0; i < width; ++i) {
    dx[i] = static_cast<int>(std::lround(i * std::cos(theta)));
    dy[i] = static_cast<int>(std::lround(i * std::sin(theta)));
  }
  std::vector<float> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < width; ++i) {
        const int sy = std::clamp(y + dy[i], 0, h - 1);
        const int sx = std::clamp(x + dx[i], 0, w - 1);
        acc += weights[i] * src[static_cast<std::size_t>(sy) * w + sx];
      }
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc / total);
    }
  }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = std::fmod((g - b) / d + 6.0, 6.0);
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  h /= 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

// Centered crop of size ceil(n / zoom), bilinearly upsampled back to n x n-ish.
std::vector<float> clipped_zoom(const std::vector<float>& src, int h, int w, double zoom) {
  if (zoom <= 1.0) return src;
  const double ch = std::ceil(h / zoom);
  const double cw = std::ceil(w / zoom);
  const double top = std::floor((h - ch) / 2.0);
  const double left = std::floor((w - cw) / 2.0);
  std::vector<float> out(src.size());
  for (int i = 0; i < h; ++i) {
    const double sy = std::clamp(top + (i + 0.5) / zoom - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - y0;
    for (int j = 0; j < w; ++j) {
      const double sx = std::clamp(left + (j + 0.5) / zoom - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - x0;
      const double top_row = src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx;
      const double bottom_row = src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx;
      out[static_cast<std::size_t>(i) * w + j] = static_cast<float>(top_row * (1 - fy) + bottom_row * fy);
    }
  }
  return out;
}

double uniform_range(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

std::string_view corruption_name(CorruptionKind kind) { return kNames.at(static_cast<int>(kind)); }
std::string_view corruption_label(CorruptionKind kind) { return kLabels.at(static_cast<int>(kind)); }

CorruptionKind corruption_from_name(std::string_view name) {
  for (int i = 0; i < kNumCorruptionKinds; ++i) {
    if (kNames[i] == name) return static_cast<CorruptionKind>(i);
  }
  throw ValidationError("unknown corruption kind '" + std::string(name) + "'");
}

void validate(const CorruptionSpec& spec) {
  const int k = static_cast<int>(spec.kind);
  if (k < 0 || k >= kNumCorruptionKinds) throw ValidationError("corrupt: unknown corruption kind");
  if (spec.severity < 1 || spec.severity > kNumSeverities) {
    throw ValidationError("corrupt: severity must be in 1..5, got " + std::to_string(spec.severity));
  }
}

Tensor<float> gaussian_noise(const Tensor<float>& image, double std, Rng& rng) {
  Tensor<float> out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out.values()[i] = clip01(image.values()[i] + std * standard_normal(rng));
  }
  return out;
}

Tensor<float> impulse_noise(const Tensor<float>& image, double amount, Rng& rng) {
  Tensor<float> out = image;
  for (auto& v : out.values()) {
    if (uniform01(rng) < amount) v = uniform01(rng) < 0.5 ? 0.0f : 1.0f;
  }
  return out;
}

Tensor<float> brightness(const Tensor<float>& image, double shift) {
  check_image(image);
  Tensor<float> out(image.shape());
  for (int b = 0; b < image.batch(); ++b) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        double h, s, v, r, g, bl;
        rgb_to_hsv(image(b, 0, y, x), image(b, 1, y, x), image(b, 2, y, x), h, s, v);
        v = std::clamp(v + shift, 0.0, 1.0);
        hsv_to_rgb(h, s, v, r, g, bl);
        out(b, 0, y, x) = clip01(r);
        out(b, 1, y, x) = clip01(g);
        out(b, 2, y, x) = clip01(bl);
      }
    }
  }
  return out;
}

Tensor<float> contrast(const Tensor<float>& image, double factor) {
  Tensor<float> out(image.shape());
  for (int b = 0; b < image.batch(); ++b) {
    for (int c = 0; c < image.channels(); ++c) {
      const auto src = image.plane(b, c);
      double mean = 0.0;
      for (float v : src) mean += v;
      mean /= static_cast<double>(src.size());
      auto dst = out.plane(b, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = clip01((src[i] - mean) * factor + mean);
    }
  }
  return out;
}

Tensor<float> defocus_blur(const Tensor<float>& image, double radius, double alias_blur) {
  // Disk kernel smoothed by a 3x3 Gaussian to reduce aliasing.
  const int r = static_cast<int>(std::ceil(radius));
  const int ksize = 2 * (r + 1) + 1;
  std::vector<double> disk(static_cast<std::size_t>(ksize) * ksize, 0.0);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    for (int j = -r; j <= r; ++j) {
      if (i * i + j * j <= radius * radius) {
        disk[static_cast<std::size_t>(i + r + 1) * ksize + (j + r + 1)] = 1.0;
        total += 1.0;
      }
    }
  }
  for (auto& v : disk) v /= total;
  std::array<double, 3> g{};
  const double s2 = 2.0 * alias_blur * alias_blur;
  g[0] = g[2] = std::exp(-1.0 / s2);
  g[1] = 1.0;
  const double gs = g[0] + g[1] + g[2];
  for (auto& v : g) v /= gs;
  std::vector<double> kernel(disk.size(), 0.0);
  for (int i = 0; i < ksize; ++i) {
    for (int j = 0; j < ksize; ++j) {
      double acc = 0.0;
      for (int a = -1; a <= 1; ++a) {
        for (int c = -1; c <= 1; ++c) {
          acc += g[a + 1] * g[c + 1] * disk[static_cast<std::size_t>(reflect101(i + a, ksize)) * ksize + reflect101(j + c, ksize)];
        }
      }
      kernel[static_cast<std::size_t>(i) * ksize + j] = acc;
    }
  }
  return filter2d(image, kernel, ksize);
}

Tensor<float> motion_blur(const Tensor<float>& image, double radius, double sigma, double angle_deg) {
  Tensor<float> out(image.shape());
  for (int b = 0; b < image.batch(); ++b) {
    for (int c = 0; c < image.channels(); ++c) {
      const auto plane = motion_plane(image.plane(b, c), image.height(), image.width(), radius, sigma, angle_deg);
      auto dst = out.plane(b, c);
      for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = clip01(plane[i]);
    }
  }
  return out;
}

Tensor<float> snow_noise(const Tensor<float>& image, const SnowParams& p, Rng& rng) {
  check_image(image);
  const int h = image.height();
  const int w = image.width();
  Tensor<float> out(image.shape());
  for (int b = 0; b < image.batch(); ++b) {
    std::vector<float> layer(static_cast<std::size_t>(h) * w);
    for (auto& v : layer) v = static_cast<float>(p.loc + p.scale * standard_normal(rng));
    layer = clipped_zoom(layer, h, w, p.zoom);
    for (auto& v : layer) v = v < p.threshold ? 0.0f : std::min(v, 1.0f);
    // the reference quantizes the layer to 8 bits before blurring
    for (auto& v : layer) v = std::floor(v * 255.0f) / 255.0f;
    const double angle = uniform_range(rng, -135.0, -45.0);
    layer = motion_plane(layer, h, w, p.motion_radius, p.motion_sigma, angle);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double gray = 0.299 * image(b, 0, y, x) + 0.587 * image(b, 1, y, x) + 0.114 * image(b, 2, y, x);
        const double flake = layer[static_cast<std::size_t>(y) * w + x] +
                             layer[static_cast<std::size_t>(h - 1 - y) * w + (w - 1 - x)];
        for (int c = 0; c < 3; ++c) {
          const double v = image(b, c, y, x);
          const double mixed = p.blend * v + (1.0 - p.blend) * std::max(v, gray * 1.5 + 0.5);
          out(b, c, y, x) = clip01(mixed + flake);
        }
      }
    }
  }
  return out;
}

Tensor<float> frost_overlay(int height, int width, Rng& rng) {
  // Frosted base from fractal noise plus bright needle-like crystals.
  const auto base = texture_field(TextureKind::kSoil, height, width, 1.5f, rng);
  std::vector<float> v(base.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.45f + 0.35f * base[i];
  const int crystals = std::max(4, height * width / 96);
  for (int k = 0; k < crystals; ++k) {
    double y = uniform01(rng) * height;
    double x = uniform01(rng) * width;
    const double theta = uniform01(rng) * 2.0 * std::numbers::pi;
    const int length = 3 + uniform_int(rng, 10);
    const float glow = static_cast<float>(0.15 + 0.25 * uniform01(rng));
    for (int s = 0; s < length; ++s) {
      const int yi = static_cast<int>(y);
      const int xi = static_cast<int>(x);
      if (yi >= 0 && yi < height && xi >= 0 && xi < width) {
        auto& px = v[static_cast<std::size_t>(yi) * width + xi];
        px = std::min(1.0f, px + glow);
      }
      y += std::sin(theta);
      x += std::cos(theta);
    }
  }
  Tensor<float> out(1, 3, height, width);
  constexpr std::array<float, 3> kTint{0.88f, 0.94f, 1.0f};
  for (int c = 0; c < 3; ++c) {
    auto dst = out.plane(0, c);
    for (std::size_t i = 0; i < v.size(); ++i) dst[i] = clip01(v[i] * kTint[c]);
  }
  return out;
}

Tensor<float> frost_lens(const Tensor<float>& image, const FrostParams& p, Rng& rng) {
  Tensor<float> out(image.shape());
  for (int b = 0; b < image.batch(); ++b) {
    const Tensor<float> frost = frost_overlay(image.height(), image.width(), rng);
    for (int c = 0; c < image.channels(); ++c) {
      const auto src = image.plane(b, c);
      const auto f = frost.plane(0, c % 3);
      auto dst = out.plane(b, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = clip01(p.image_weight * src[i] + p.frost_weight * f[i]);
    }
  }
  return out;
}

Tensor<float> corrupt(const Tensor<float>& image, const CorruptionSpec& spec) {
  validate(spec);
  check_image(image);
  const int s = spec.severity - 1;
  Rng rng = make_stream(spec.seed, "corruption." + std::string(corruption_name(spec.kind)), spec.severity);
  switch (spec.kind) {
    case CorruptionKind::kBrightness: return brightness(image, kBrightnessShift[s]);
    case CorruptionKind::kContrast: return contrast(image, kContrastFactor[s]);
    case CorruptionKind::kDefocusBlur: return defocus_blur(image, kDefocus[s].radius, kDefocus[s].alias_blur);
    case CorruptionKind::kMotionBlur: {
      // One angle per image, shared across severities so that only the kernel grows.
      Rng angles = make_stream(spec.seed, "corruption.motion_blur.angle");
      Tensor<float> out(image.shape());
      for (int b = 0; b < image.batch(); ++b) {
        Tensor<float> one(1, image.channels(), image.height(), image.width());
        std::copy(image.item(b).begin(), image.item(b).end(), one.item(0).begin());
        const auto blurred = motion_blur(one, kMotion[s].radius, kMotion[s].sigma, uniform_range(angles, -45.0, 45.0));
        std::copy(blurred.item(0).begin(), blurred.item(0).end(), out.item(b).begin());
      }
      return out;
    }
    case CorruptionKind::kImpulseNoise: return impulse_noise(image, kImpulseAmount[s], rng);
    case CorruptionKind::kGaussianNoise: return gaussian_noise(image, kGaussianNoiseStd[s], rng);
    case CorruptionKind::kSnowNoise: return snow_noise(image, kSnow[s], rng);
    case CorruptionKind::kFrostLens: return frost_lens(image, kFrost[s], rng);
  }
  throw ValidationError("corrupt: unknown corruption kind");
}

}  // namespace stseg
