#pragma once

// Minimal layers with explicit backward passes. Activations live in caller-owned
// caches so that two forward paths can share one set of parameters.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stseg/error.hpp"
#include "stseg/rng.hpp"
#include "stseg/tensor.hpp"

namespace stseg {

template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, T{0});
    grad.assign(count, T{0});
  }
  [[nodiscard]] std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int ho, int wo, T* cols) {
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c) {
    const T* src = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* dst = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * n;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - pad + ki;
          T* row = dst + static_cast<std::size_t>(oh) * wo;
          if (ih < 0 || ih >= h) {
            std::fill(row, row + wo, T{0});
            continue;
          }
          const T* in_row = src + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * stride - pad + kj;
            row[ow] = (iw >= 0 && iw < w) ? in_row[iw] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int channels, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c) {
    T* dst = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* src = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * n;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          T* out_row = dst + static_cast<std::size_t>(ih) * w;
          const T* row = src + static_cast<std::size_t>(oh) * wo;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) out_row[iw] += row[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution, square kernel, zero padding.
template <typename T>
class Conv2d {
 public:
  struct Cache {
    Shape4 input_shape;
    std::vector<T> columns;  // per item [in*k*k, Ho*Wo], concatenated over the batch
  };

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad)
      : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
        bias(name + ".bias", {out_channels}),
        in_(in_channels),
        out_(out_channels),
        k_(kernel),
        stride_(stride),
        pad_(pad) {}

  /// Kaiming-normal weights for a ReLU network, zero bias.
  void init(Rng& rng) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_) * k_ * k_));
    for (auto& v : weight.value) v = static_cast<T>(stddev * standard_normal(rng));
    std::fill(bias.value.begin(), bias.value.end(), T{0});
  }

  [[nodiscard]] int in_channels() const { return in_; }
  [[nodiscard]] int out_channels() const { return out_; }
  [[nodiscard]] int out_size(int n) const { return (n + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    if (x.channels() != in_) {
      throw ValidationError(weight.name + ": expected " + std::to_string(in_) + " input channels, got " +
                            std::to_string(x.channels()));
    }
    const int ho = out_size(x.height());
    const int wo = out_size(x.width());
    if (ho < 1 || wo < 1) throw ValidationError(weight.name + ": input too small " + x.shape().str());
    const int rows = in_ * k_ * k_;
    const std::size_t n = static_cast<std::size_t>(ho) * wo;
    Tensor<T> y(x.batch(), out_, ho, wo);
    std::vector<T> scratch;
    if (cache) {
      cache->input_shape = x.shape();
      cache->columns.resize(static_cast<std::size_t>(x.batch()) * rows * n);
    } else {
      scratch.resize(static_cast<std::size_t>(rows) * n);
    }
    detail::ConstMatMap<T> w(weight.value.data(), out_, rows);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.value.data(), out_);
    for (int i = 0; i < x.batch(); ++i) {
      T* cols = cache ? cache->columns.data() + static_cast<std::size_t>(i) * rows * n : scratch.data();
      detail::im2col(x.item(i).data(), in_, x.height(), x.width(), k_, stride_, pad_, ho, wo, cols);
      detail::MatMap<T> out(y.item(i).data(), out_, static_cast<Eigen::Index>(n));
      out.noalias() = w * detail::ConstMatMap<T>(cols, rows, static_cast<Eigen::Index>(n));
      out.colwise() += b;
    }
    return y;
  }

  /// Accumulates weight/bias gradients; returns dL/dx unless `input_grad` is false.
  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache, bool input_grad = true) {
    const Shape4& xs = cache.input_shape;
    const int ho = dy.height();
    const int wo = dy.width();
    const int rows = in_ * k_ * k_;
    const std::size_t n = static_cast<std::size_t>(ho) * wo;
    if (dy.channels() != out_ || dy.batch() != xs.batch) throw ValidationError(weight.name + ": bad grad shape");
    detail::MatMap<T> dw(weight.grad.data(), out_, rows);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias.grad.data(), out_);
    detail::ConstMatMap<T> w(weight.value.data(), out_, rows);
    Tensor<T> dx;
    std::vector<T> dcols;
    if (input_grad) {
      dx = Tensor<T>(xs);
      dcols.resize(static_cast<std::size_t>(rows) * n);
    }
    for (int i = 0; i < xs.batch; ++i) {
      detail::ConstMatMap<T> g(dy.item(i).data(), out_, static_cast<Eigen::Index>(n));
      detail::ConstMatMap<T> cols(cache.columns.data() + static_cast<std::size_t>(i) * rows * n, rows,
                                  static_cast<Eigen::Index>(n));
      dw.noalias() += g * cols.transpose();
      // Plain loop: Eigen's vectorized reduction peels by pointer alignment, which would
      // make the summation order (and the rounded result) depend on heap addresses.
      for (int o = 0; o < out_; ++o) {
        const T* row = dy.item(i).data() + static_cast<std::size_t>(o) * n;
        T acc{0};
        for (std::size_t j = 0; j < n; ++j) acc += row[j];
        db[o] += acc;
      }
      if (input_grad) {
        detail::MatMap<T> dc(dcols.data(), rows, static_cast<Eigen::Index>(n));
        dc.noalias() = w.transpose() * g;
        detail::col2im(dcols.data(), in_, xs.height, xs.width, k_, stride_, pad_, ho, wo, dx.item(i).data());
      }
    }
    return dx;
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
  int k_ = 1;
  int stride_ = 1;
  int pad_ = 0;
};

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.values()) v = v < T{0} ? T{0} : v;  // keeps NaN visible to the finiteness checks
}

/// dL/dx of ReLU given its output y.
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  const T* out = y.data();
  T* g = dy.data();
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(out[i] > T{0})) g[i] = T{0};
  }
}

/// Bilinear resampling with half-pixel centers (align_corners = false).
class BilinearResize {
 public:
  BilinearResize() = default;
  BilinearResize(int in_h, int in_w, int out_h, int out_w)
      : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w) {
    build_axis(in_h, out_h, y0_, y1_, wy_);
    build_axis(in_w, out_w, x0_, x1_, wx_);
  }

  template <typename T>
  Tensor<T> forward(const Tensor<T>& x) const {
    check(x.height(), x.width());
    Tensor<T> y(x.batch(), x.channels(), out_h_, out_w_);
    for (int b = 0; b < x.batch(); ++b) {
      for (int c = 0; c < x.channels(); ++c) {
        const auto src = x.plane(b, c);
        auto dst = y.plane(b, c);
        for (int i = 0; i < out_h_; ++i) {
          const T* r0 = src.data() + static_cast<std::size_t>(y0_[i]) * in_w_;
          const T* r1 = src.data() + static_cast<std::size_t>(y1_[i]) * in_w_;
          const double a = wy_[i];
          for (int j = 0; j < out_w_; ++j) {
            const double bw = wx_[j];
            const double top = (1.0 - bw) * r0[x0_[j]] + bw * r0[x1_[j]];
            const double bot = (1.0 - bw) * r1[x0_[j]] + bw * r1[x1_[j]];
            dst[static_cast<std::size_t>(i) * out_w_ + j] = static_cast<T>((1.0 - a) * top + a * bot);
          }
        }
      }
    }
    return y;
  }

  template <typename T>
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(dy.batch(), dy.channels(), in_h_, in_w_);
    for (int b = 0; b < dy.batch(); ++b) {
      for (int c = 0; c < dy.channels(); ++c) {
        const auto g = dy.plane(b, c);
        auto dst = dx.plane(b, c);
        for (int i = 0; i < out_h_; ++i) {
          T* r0 = dst.data() + static_cast<std::size_t>(y0_[i]) * in_w_;
          T* r1 = dst.data() + static_cast<std::size_t>(y1_[i]) * in_w_;
          const double a = wy_[i];
          for (int j = 0; j < out_w_; ++j) {
            const double v = g[static_cast<std::size_t>(i) * out_w_ + j];
            const double bw = wx_[j];
            r0[x0_[j]] += static_cast<T>((1.0 - a) * (1.0 - bw) * v);
            r0[x1_[j]] += static_cast<T>((1.0 - a) * bw * v);
            r1[x0_[j]] += static_cast<T>(a * (1.0 - bw) * v);
            r1[x1_[j]] += static_cast<T>(a * bw * v);
          }
        }
      }
    }
    return dx;
  }

 private:
  void check(int h, int w) const {
    if (h != in_h_ || w != in_w_) throw ValidationError("BilinearResize: unexpected input size");
  }
  static void build_axis(int in, int out, std::vector<int>& i0, std::vector<int>& i1, std::vector<double>& wt) {
    i0.resize(out);
    i1.resize(out);
    wt.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = std::max((o + 0.5) * scale - 0.5, 0.0);
      int lo = std::min(static_cast<int>(src), in - 1);
      i0[o] = lo;
      i1[o] = std::min(lo + 1, in - 1);
      wt[o] = src - lo;
    }
  }

  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  std::vector<int> y0_, y1_, x0_, x1_;
  std::vector<double> wy_, wx_;
};

/// Channel-wise softmax of logits [B, C, H, W].
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape());
  const int classes = logits.channels();
  const std::size_t plane = logits.shape().plane();
  for (int b = 0; b < logits.batch(); ++b) {
    const T* z = logits.item(b).data();
    T* out = p.item(b).data();
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = z[i];
      for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(z[c * plane + i]));
      double sum = 0.0;
      for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(z[c * plane + i]) - mx);
      for (int c = 0; c < classes; ++c) {
        out[c * plane + i] = static_cast<T>(std::exp(static_cast<double>(z[c * plane + i]) - mx) / sum);
      }
    }
  }
  return p;
}

/// dL/dlogits from dL/dprobs: p * (g - sum_c p g).
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& dprobs) {
  Tensor<T> dz(probs.shape());
  const int classes = probs.channels();
  const std::size_t plane = probs.shape().plane();
  for (int b = 0; b < probs.batch(); ++b) {
    const T* p = probs.item(b).data();
    const T* g = dprobs.item(b).data();
    T* out = dz.item(b).data();
    for (std::size_t i = 0; i < plane; ++i) {
      double dot = 0.0;
      for (int c = 0; c < classes; ++c) dot += static_cast<double>(p[c * plane + i]) * g[c * plane + i];
      for (int c = 0; c < classes; ++c) {
        out[c * plane + i] = static_cast<T>(p[c * plane + i] * (g[c * plane + i] - dot));
      }
    }
  }
  return dz;
}

/// Per-pixel argmax over channels; ties resolve to the lowest class id.
template <typename T>
LabelMap argmax_channels(const Tensor<T>& scores) {
  LabelMap out(scores.batch(), scores.height(), scores.width());
  const std::size_t plane = scores.shape().plane();
  for (int b = 0; b < scores.batch(); ++b) {
    const T* s = scores.item(b).data();
    auto dst = out.item(b);
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      for (int c = 1; c < scores.channels(); ++c) {
        if (s[c * plane + i] > s[best * plane + i]) best = c;
      }
      dst[i] = best;
    }
  }
  return out;
}

}  // namespace stseg
