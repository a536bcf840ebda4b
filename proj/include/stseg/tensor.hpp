#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stseg/error.hpp"

namespace stseg {

/// Shape of a rank-4 NCHW array.
struct Shape4 {
  int batch = 0;
  int channels = 0;
  int height = 0;
  int width = 0;

  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  [[nodiscard]] std::size_t numel() const {
    return static_cast<std::size_t>(batch) * channels * plane();
  }
  bool operator==(const Shape4&) const = default;

  [[nodiscard]] std::string str() const {
    return "[" + std::to_string(batch) + "," + std::to_string(channels) + "," +
           std::to_string(height) + "," + std::to_string(width) + "]";
  }
};

/// Dense rank-4 array in NCHW layout. Carries feature maps, images and probability maps.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.batch < 0 || shape.channels < 0 || shape.height < 0 || shape.width < 0) {
      throw ValidationError("negative tensor dimension " + shape.str());
    }
  }
  Tensor(int b, int c, int h, int w, T fill = T{0}) : Tensor(Shape4{b, c, h, w}, fill) {}

  [[nodiscard]] const Shape4& shape() const { return shape_; }
  [[nodiscard]] int batch() const { return shape_.batch; }
  [[nodiscard]] int channels() const { return shape_.channels; }
  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator()(int b, int c, int h, int w) { return data_[index(b, c, h, w)]; }
  const T& operator()(int b, int c, int h, int w) const { return data_[index(b, c, h, w)]; }

  /// Contiguous H*W plane of channel c of batch item b.
  std::span<T> plane(int b, int c) {
    return {data_.data() + (static_cast<std::size_t>(b) * shape_.channels + c) * shape_.plane(),
            shape_.plane()};
  }
  std::span<const T> plane(int b, int c) const {
    return {data_.data() + (static_cast<std::size_t>(b) * shape_.channels + c) * shape_.plane(),
            shape_.plane()};
  }
  /// All channels of batch item b.
  std::span<T> item(int b) {
    const std::size_t n = static_cast<std::size_t>(shape_.channels) * shape_.plane();
    return {data_.data() + b * n, n};
  }
  std::span<const T> item(int b) const {
    const std::size_t n = static_cast<std::size_t>(shape_.channels) * shape_.plane();
    return {data_.data() + b * n, n};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& o) {
    if (o.shape_ != shape_) throw ValidationError("tensor add: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

 private:
  [[nodiscard]] std::size_t index(int b, int c, int h, int w) const {
    return ((static_cast<std::size_t>(b) * shape_.channels + c) * shape_.height + h) *
               shape_.width +
           w;
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

/// Per-pixel integer class ids for a batch, layout [B, H, W].
struct LabelMap {
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<int> ids;

  LabelMap() = default;
  LabelMap(int b, int h, int w, int fill = 0)
      : batch(b), height(h), width(w), ids(static_cast<std::size_t>(b) * h * w, fill) {}

  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  int& operator()(int b, int h, int w) { return ids[(static_cast<std::size_t>(b) * height + h) * width + w]; }
  int operator()(int b, int h, int w) const {
    return ids[(static_cast<std::size_t>(b) * height + h) * width + w];
  }
  std::span<const int> item(int b) const { return {ids.data() + b * plane(), plane()}; }
  std::span<int> item(int b) { return {ids.data() + b * plane(), plane()}; }
};

}  // namespace stseg
