#pragma once

// Masked, layer-weighted L2 feature distance between segmentation-encoder features and
// a frozen texture encoder's features.

#include <array>
#include <cmath>
#include <set>
#include <span>
#include <vector>

#include "stseg/error.hpp"
#include "stseg/tensor.hpp"

namespace stseg {

inline constexpr std::array<double, 4> kDefaultTextureWeights{0.05, 0.025, 0.01, 0.005};

/// Binary mask [B, H, W]; 1 where the ground-truth class is a natural material.
struct NaturalMask {
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<unsigned char> values;

  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  [[nodiscard]] std::span<const unsigned char> item(int b) const { return {values.data() + b * plane(), plane()}; }
  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v;
    return n;
  }
};

/// Indicator of membership of each pixel's class in `natural`.
inline NaturalMask natural_mask(const LabelMap& labels, const std::set<int>& natural, int num_classes) {
  NaturalMask m{labels.batch, labels.height, labels.width, std::vector<unsigned char>(labels.ids.size(), 0)};
  for (std::size_t i = 0; i < labels.ids.size(); ++i) {
    const int id = labels.ids[i];
    if (id < 0 || id >= num_classes) throw ValidationError("natural_mask: unknown class id " + std::to_string(id));
    m.values[i] = natural.contains(id) ? 1 : 0;
  }
  return m;
}

/// Nearest-neighbour resampling (source index floor(i * in / out)); keeps the mask binary.
inline NaturalMask downsample_mask(const NaturalMask& m, int height, int width) {
  NaturalMask out{m.batch, height, width, std::vector<unsigned char>(static_cast<std::size_t>(m.batch) * height * width)};
  for (int b = 0; b < m.batch; ++b) {
    for (int i = 0; i < height; ++i) {
      const int si = static_cast<int>(static_cast<long long>(i) * m.height / height);
      for (int j = 0; j < width; ++j) {
        const int sj = static_cast<int>(static_cast<long long>(j) * m.width / width);
        out.values[(static_cast<std::size_t>(b) * height + i) * width + j] =
            m.values[(static_cast<std::size_t>(b) * m.height + si) * m.width + sj];
      }
    }
  }
  return out;
}

/// Per-pixel Euclidean norm over channels of (F_t - F_s); shape [B, 1, H, W].
template <typename T>
Tensor<T> feature_distance(const Tensor<T>& teacher, const Tensor<T>& student) {
  if (teacher.shape() != student.shape()) {
    throw ValidationError("feature_distance: shape mismatch " + teacher.shape().str() + " vs " +
                          student.shape().str());
  }
  Tensor<T> fd(teacher.batch(), 1, teacher.height(), teacher.width());
  const std::size_t plane = teacher.shape().plane();
  for (int b = 0; b < teacher.batch(); ++b) {
    auto out = fd.plane(b, 0);
    std::vector<double> acc(plane, 0.0);
    for (int c = 0; c < teacher.channels(); ++c) {
      const auto t = teacher.plane(b, c);
      const auto s = student.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = static_cast<double>(t[i]) - static_cast<double>(s[i]);
        acc[i] += d * d;
      }
    }
    for (std::size_t i = 0; i < plane; ++i) out[i] = static_cast<T>(std::sqrt(acc[i]));
  }
  return fd;
}

/// sum_l gamma_l * (sum FD_l * M_l) / (sum M_l), batch-averaged. `mask` is at label
/// resolution and is resampled to each layer; a layer with an empty mask contributes 0.
template <typename T>
double texture_loss(std::span<const Tensor<T>> distances, const NaturalMask& mask, std::span<const double> weights) {
  if (distances.size() != weights.size()) throw ValidationError("texture_loss: one weight per layer required");
  if (mask.batch == 0) return 0.0;
  double total = 0.0;
  for (std::size_t l = 0; l < distances.size(); ++l) {
    const auto& fd = distances[l];
    if (fd.batch() != mask.batch || fd.channels() != 1) throw ValidationError("texture_loss: bad distance map");
    const NaturalMask m = downsample_mask(mask, fd.height(), fd.width());
    for (int b = 0; b < mask.batch; ++b) {
      const auto d = fd.plane(b, 0);
      const auto mk = m.item(b);
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (mk[i]) {
          num += d[i];
          den += 1.0;
        }
      }
      if (den > 0.0) total += weights[l] * num / den;
    }
  }
  return total / mask.batch;
}

template <typename T>
struct TextureLossResult {
  double loss = 0.0;
  std::vector<Tensor<T>> student_grads;  ///< dL/dF_s per layer
};

/// texture_loss together with its gradient w.r.t. the student (segmentation) features.
/// The teacher features are constants.
template <typename T>
TextureLossResult<T> texture_loss_with_grad(std::span<const Tensor<T>> teacher, std::span<const Tensor<T>> student,
                                            const NaturalMask& mask, std::span<const double> weights) {
  if (teacher.size() != student.size()) throw ValidationError("texture_loss: layer count mismatch");
  TextureLossResult<T> out;
  std::vector<Tensor<T>> distances;
  for (std::size_t l = 0; l < teacher.size(); ++l) distances.push_back(feature_distance(teacher[l], student[l]));
  out.loss = texture_loss(std::span<const Tensor<T>>(distances), mask, weights);
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    const auto& t = teacher[l];
    const auto& s = student[l];
    Tensor<T> g(s.shape());
    const NaturalMask m = downsample_mask(mask, s.height(), s.width());
    for (int b = 0; b < s.batch(); ++b) {
      const auto mk = m.item(b);
      double den = 0.0;
      for (auto v : mk) den += v;
      if (den == 0.0) continue;
      const double scale = weights[l] / (den * mask.batch);
      const auto fd = distances[l].plane(b, 0);
      for (int c = 0; c < s.channels(); ++c) {
        const auto tp = t.plane(b, c);
        const auto sp = s.plane(b, c);
        auto gp = g.plane(b, c);
        for (std::size_t i = 0; i < sp.size(); ++i) {
          if (mk[i] && fd[i] > T{0}) {
            gp[i] = static_cast<T>(scale * (static_cast<double>(sp[i]) - static_cast<double>(tp[i])) / fd[i]);
          }
        }
      }
    }
    out.student_grads.push_back(std::move(g));
  }
  return out;
}

}  // namespace stseg
