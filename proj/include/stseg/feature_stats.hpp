#pragma once

// Channel-wise style statistics of feature maps and AdaIN-form style substitution.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stseg/error.hpp"
#include "stseg/tensor.hpp"

namespace stseg {

/// Per-channel mean and (population) standard deviation of one sample's feature map.
template <typename T>
struct StyleStats {
  std::vector<T> mean;
  std::vector<T> std;

  StyleStats() = default;
  explicit StyleStats(int channels) : mean(channels, T{0}), std(channels, T{0}) {}
  StyleStats(std::vector<T> m, std::vector<T> s) : mean(std::move(m)), std(std::move(s)) {
    if (mean.size() != std.size()) throw ValidationError("StyleStats: mean/std length mismatch");
  }

  [[nodiscard]] int channels() const { return static_cast<int>(mean.size()); }

  template <typename U>
  [[nodiscard]] StyleStats<U> cast() const {
    return StyleStats<U>(std::vector<U>(mean.begin(), mean.end()), std::vector<U>(std.begin(), std.end()));
  }
  bool operator==(const StyleStats&) const = default;
};

/// One observation: the style of one image at every styled layer.
using LayerStyles = std::vector<StyleStats<double>>;

/// Sampled styles for a training batch, indexed [layer][item].
using StyleBatch = std::vector<std::vector<StyleStats<double>>>;

inline constexpr double kDefaultStyleEps = 1e-5;

namespace detail {

struct PlaneMoments {
  double mean = 0.0;
  double std = 0.0;
};

// Welford accumulation in double; population variance.
template <typename T>
PlaneMoments plane_moments(std::span<const T> plane) {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (T v : plane) {
    ++n;
    const double x = static_cast<double>(v);
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  const double var = n > 0 ? std::max(m2 / static_cast<double>(n), 0.0) : 0.0;
  return {mean, std::sqrt(var)};
}

inline double regularized_std(double sigma, double eps) { return std::sqrt(sigma * sigma + eps * eps); }

template <typename T>
const StyleStats<T>& target_for(std::span<const StyleStats<T>> targets, int b) {
  return targets.size() == 1 ? targets[0] : targets[b];
}

template <typename T>
void check_targets(const Tensor<T>& f, std::span<const StyleStats<T>> targets) {
  if (targets.size() != 1 && targets.size() != static_cast<std::size_t>(f.batch())) {
    throw ValidationError("substitute_style: expected 1 or " + std::to_string(f.batch()) +
                          " target styles, got " + std::to_string(targets.size()));
  }
  for (const auto& t : targets) {
    if (t.channels() != f.channels() || t.std.size() != t.mean.size()) {
      throw ValidationError("substitute_style: target has " + std::to_string(t.channels()) +
                            " channels, feature map has " + std::to_string(f.channels()));
    }
    for (int c = 0; c < t.channels(); ++c) {
      if (!std::isfinite(t.mean[c]) || !std::isfinite(t.std[c]) || t.std[c] < T{0}) {
        throw ValidationError("substitute_style: target std must be finite and non-negative");
      }
    }
  }
}

}  // namespace detail

/// Instance statistics of every batch item: spatial mean and population std per channel.
/// `layer` is only used to name the offending layer in diagnostics.
template <typename T>
std::vector<StyleStats<T>> compute_style(const Tensor<T>& f, int layer = 0) {
  if (f.channels() < 1 || f.height() < 1 || f.width() < 1) {
    throw ValidationError("compute_style: degenerate feature map " + f.shape().str() + " at layer " +
                          std::to_string(layer));
  }
  std::vector<StyleStats<T>> out;
  out.reserve(f.batch());
  for (int b = 0; b < f.batch(); ++b) {
    StyleStats<T> s(f.channels());
    for (int c = 0; c < f.channels(); ++c) {
      const auto plane = f.plane(b, c);
      for (T v : plane) {
        if (!std::isfinite(v)) {
          throw NumericError("compute_style: non-finite feature value at layer " + std::to_string(layer) +
                             " (item " + std::to_string(b) + ", channel " + std::to_string(c) + ")");
        }
      }
      const auto m = detail::plane_moments(plane);
      s.mean[c] = static_cast<T>(m.mean);
      s.std[c] = static_cast<T>(m.std);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// F_sa = sigma_g * (F - mu_s) / s + mu_g per item and channel, s = sqrt(sigma_s^2 + eps^2).
/// Putting eps in quadrature keeps flat channels finite (they map to mu_g) while the
/// bias on a channel with sigma_s = 0.01 stays near 5e-7 relative.
/// `targets` holds one style per batch item, or a single style applied to all items.
template <typename T>
Tensor<T> substitute_style(const Tensor<T>& f, std::span<const StyleStats<T>> targets,
                           double eps = kDefaultStyleEps) {
  detail::check_targets(f, targets);
  if (!(eps > 0.0)) throw ValidationError("substitute_style: eps must be positive");
  Tensor<T> out(f.shape());
  for (int b = 0; b < f.batch(); ++b) {
    const auto& tgt = detail::target_for(targets, b);
    for (int c = 0; c < f.channels(); ++c) {
      const auto src = f.plane(b, c);
      const auto m = detail::plane_moments(src);
      const double scale = static_cast<double>(tgt.std[c]) / detail::regularized_std(m.std, eps);
      const double shift = static_cast<double>(tgt.mean[c]) - scale * m.mean;
      auto dst = out.plane(b, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<T>(scale * static_cast<double>(src[i]) + shift);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> substitute_style(const Tensor<T>& f, const std::vector<StyleStats<T>>& targets,
                           double eps = kDefaultStyleEps) {
  return substitute_style(f, std::span<const StyleStats<T>>(targets), eps);
}

/// Gradient of substitute_style w.r.t. its input F (targets are constants). The source
/// statistics mu_s, sigma_s are functions of F and are differentiated through.
template <typename T>
Tensor<T> substitute_style_backward(const Tensor<T>& f, std::span<const StyleStats<T>> targets,
                                    const Tensor<T>& grad_out, double eps = kDefaultStyleEps) {
  detail::check_targets(f, targets);
  if (grad_out.shape() != f.shape()) throw ValidationError("substitute_style_backward: shape mismatch");
  Tensor<T> grad_in(f.shape());
  const double n = static_cast<double>(f.shape().plane());
  for (int b = 0; b < f.batch(); ++b) {
    const auto& tgt = detail::target_for(targets, b);
    for (int c = 0; c < f.channels(); ++c) {
      const auto x = f.plane(b, c);
      const auto dy = grad_out.plane(b, c);
      const auto m = detail::plane_moments(x);
      const double s = detail::regularized_std(m.std, eps);
      const double g = static_cast<double>(tgt.std[c]);
      double sum_dy = 0.0;
      double sum_dy_xc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        sum_dy += dy[i];
        sum_dy_xc += static_cast<double>(dy[i]) * (static_cast<double>(x[i]) - m.mean);
      }
      // d s / d x_i = (x_i - mu) / (N s)
      const double coupling = g * sum_dy_xc / (s * s * s * n);
      auto dx = grad_in.plane(b, c);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double xc = static_cast<double>(x[i]) - m.mean;
        dx[i] = static_cast<T>(g / s * (static_cast<double>(dy[i]) - sum_dy / n) - coupling * xc);
      }
    }
  }
  return grad_in;
}

template <typename T>
Tensor<T> substitute_style_backward(const Tensor<T>& f, const std::vector<StyleStats<T>>& targets,
                                    const Tensor<T>& grad_out, double eps = kDefaultStyleEps) {
  return substitute_style_backward(f, std::span<const StyleStats<T>>(targets), grad_out, eps);
}

}  // namespace stseg
