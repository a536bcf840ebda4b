#pragma once

// Training losses on per-pixel probability maps [B, C, H, W]. Every loss is averaged
// over pixels and then over batch items. Log arguments are clamped at kProbClamp.

#include <cmath>
#include <string>

#include "stseg/error.hpp"
#include "stseg/tensor.hpp"

namespace stseg {

inline constexpr double kProbClamp = 1e-12;

namespace detail {

template <typename T>
void check_labels(const Tensor<T>& p, const LabelMap& y) {
  if (y.batch != p.batch() || y.height != p.height() || y.width != p.width()) {
    throw ValidationError("loss: label map " + std::to_string(y.batch) + "x" + std::to_string(y.height) + "x" +
                          std::to_string(y.width) + " does not match prediction " + p.shape().str());
  }
  for (int id : y.ids) {
    if (id < 0 || id >= p.channels()) throw ValidationError("loss: label id out of range");
  }
}

inline double clamped_log(double p) { return std::log(p > kProbClamp ? p : kProbClamp); }

}  // namespace detail

/// -(1/HW) sum_pixels sum_classes Y log P, batch-averaged. Labels are the one-hot
/// ground truth given as class ids.
template <typename T>
double cross_entropy(const Tensor<T>& probs, const LabelMap& labels) {
  detail::check_labels(probs, labels);
  const std::size_t plane = probs.shape().plane();
  double total = 0.0;
  for (int b = 0; b < probs.batch(); ++b) {
    const T* p = probs.item(b).data();
    const auto y = labels.item(b);
    double item = 0.0;
    for (std::size_t i = 0; i < plane; ++i) item -= detail::clamped_log(p[y[i] * plane + i]);
    total += item / static_cast<double>(plane);
  }
  return probs.batch() > 0 ? total / probs.batch() : 0.0;
}

/// dL/dP of cross_entropy.
template <typename T>
Tensor<T> cross_entropy_grad(const Tensor<T>& probs, const LabelMap& labels) {
  detail::check_labels(probs, labels);
  Tensor<T> g(probs.shape());
  const std::size_t plane = probs.shape().plane();
  const double norm = 1.0 / (static_cast<double>(plane) * probs.batch());
  for (int b = 0; b < probs.batch(); ++b) {
    const T* p = probs.item(b).data();
    T* out = g.item(b).data();
    const auto y = labels.item(b);
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = p[y[i] * plane + i];
      if (v > kProbClamp) out[y[i] * plane + i] = static_cast<T>(-norm / v);
    }
  }
  return g;
}

/// Cross-entropy of the style-augmented prediction; the same kernel as cross_entropy.
template <typename T>
double style_loss(const Tensor<T>& probs_augmented, const LabelMap& labels) {
  return cross_entropy(probs_augmented, labels);
}

/// (1/HW) sum_pixels KL(P_s || P_sa), batch-averaged. P_s acts as a fixed target.
template <typename T>
double align_loss(const Tensor<T>& probs_source, const Tensor<T>& probs_augmented) {
  if (probs_source.shape() != probs_augmented.shape()) throw ValidationError("align_loss: shape mismatch");
  const std::size_t plane = probs_source.shape().plane();
  const int classes = probs_source.channels();
  double total = 0.0;
  for (int b = 0; b < probs_source.batch(); ++b) {
    const T* ps = probs_source.item(b).data();
    const T* pa = probs_augmented.item(b).data();
    double item = 0.0;
    for (int c = 0; c < classes; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double s = ps[c * plane + i];
        if (s > 0.0) item += s * (detail::clamped_log(s) - detail::clamped_log(pa[c * plane + i]));
      }
    }
    total += item / static_cast<double>(plane);
  }
  return probs_source.batch() > 0 ? total / probs_source.batch() : 0.0;
}

/// dL/dP_sa of align_loss. The gradient w.r.t. P_s is zero by construction (detached target).
template <typename T>
Tensor<T> align_loss_grad(const Tensor<T>& probs_source, const Tensor<T>& probs_augmented) {
  if (probs_source.shape() != probs_augmented.shape()) throw ValidationError("align_loss: shape mismatch");
  Tensor<T> g(probs_source.shape());
  const double norm = 1.0 / (static_cast<double>(probs_source.shape().plane()) * probs_source.batch());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = probs_source.data()[i];
    const double a = probs_augmented.data()[i];
    if (s > 0.0 && a > kProbClamp) g.data()[i] = static_cast<T>(-norm * s / a);
  }
  return g;
}

/// Optional per-term multipliers; the defaults give the plain unweighted sum.
struct LossWeights {
  double ce = 1.0;
  double style = 1.0;
  double align = 1.0;
  double tex = 1.0;
};

struct LossBundle {
  double ce = 0.0;
  double style = 0.0;
  double align = 0.0;
  double tex = 0.0;
  double total = 0.0;
};

/// total = ce + style + align + tex (times optional weights). Throws NumericError naming
/// the first non-finite component.
inline LossBundle total_loss(double ce, double style, double align, double tex, const LossWeights& w = {}) {
  const std::pair<const char*, double> parts[] = {{"ce", ce}, {"style", style}, {"align", align}, {"tex", tex}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component: ") + name);
  }
  LossBundle out{ce, style, align, tex, 0.0};
  out.total = w.ce * ce + w.style * style + w.align * align + w.tex * tex;
  return out;
}

}  // namespace stseg
