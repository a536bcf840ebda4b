#pragma once

// AdamW with decoupled weight decay and a polynomial learning-rate decay.

#include <cmath>
#include <vector>

#include "stseg/error.hpp"
#include "stseg/layers.hpp"

namespace stseg {

struct AdamWOptions {
  double lr = 6e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// lr * (1 - step / total)^power, with step counted from 0.
inline double poly_lr(double base, long step, long total, double power) {
  if (total <= 0) return base;
  const double frac = std::max(0.0, 1.0 - static_cast<double>(step) / static_cast<double>(total));
  return base * std::pow(frac, power);
}

class AdamW {
 public:
  AdamW() = default;
  AdamW(const std::vector<Parameter<float>*>& params, AdamWOptions opts) : opts_(opts) {
    if (!(opts.lr > 0) || opts.beta1 < 0 || opts.beta1 >= 1 || opts.beta2 < 0 || opts.beta2 >= 1 ||
        opts.weight_decay < 0) {
      throw ValidationError("AdamW: invalid hyper-parameters");
    }
    for (auto* p : params) {
      m_.emplace_back(p->size(), 0.0f);
      v_.emplace_back(p->size(), 0.0f);
    }
  }

  /// One update with learning rate `lr`; gradients are read, not cleared.
  void step(const std::vector<Parameter<float>*>& params, double lr) {
    if (params.size() != m_.size()) throw ValidationError("AdamW: parameter list changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(opts_.beta1);
    const auto b2 = static_cast<float>(opts_.beta2);
    const auto step_size = static_cast<float>(lr / bc1);
    const auto decay = static_cast<float>(1.0 - lr * opts_.weight_decay);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    const auto eps = static_cast<float>(opts_.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& value = params[k]->value;
      const auto& grad = params[k]->grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const float g = grad[i];
        m[i] = b1 * m[i] + (1.0f - b1) * g;
        v[i] = b2 * v[i] + (1.0f - b2) * g * g;
        value[i] = value[i] * decay - step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      }
    }
  }

  [[nodiscard]] long steps() const { return t_; }
  [[nodiscard]] const AdamWOptions& options() const { return opts_; }
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  AdamWOptions opts_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  long t_ = 0;
};

}  // namespace stseg
