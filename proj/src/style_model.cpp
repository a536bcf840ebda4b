#include "stseg/style_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stseg/binary_io.hpp"
#include "stseg/error.hpp"
#include "stseg/special_functions.hpp"

namespace stseg {

StyleBuffer::StyleBuffer(std::vector<int> layer_channels, int capacity)
    : layer_channels_(std::move(layer_channels)), capacity_(capacity) {
  if (capacity_ < 1) throw ValidationError("StyleBuffer: capacity must be >= 1");
  if (layer_channels_.empty()) throw ValidationError("StyleBuffer: no styled layers");
  observations_.reserve(capacity_);
}

bool StyleBuffer::push(const LayerStyles& obs) {
  if (obs.size() != layer_channels_.size()) {
    throw ValidationError("StyleBuffer::push: expected " + std::to_string(layer_channels_.size()) +
                          " layers, got " + std::to_string(obs.size()));
  }
  for (std::size_t l = 0; l < obs.size(); ++l) {
    if (obs[l].channels() != layer_channels_[l] || obs[l].std.size() != obs[l].mean.size()) {
      throw ValidationError("StyleBuffer::push: layer " + std::to_string(l + 1) + " has " +
                            std::to_string(obs[l].channels()) + " channels, expected " +
                            std::to_string(layer_channels_[l]));
    }
  }
  observations_.push_back(obs);
  ++total_seen_;
  return flush_ready();
}

void StyleBuffer::restore(const std::vector<LayerStyles>& observations, std::uint64_t total_seen) {
  observations_.clear();
  for (const auto& o : observations) push(o);
  total_seen_ = total_seen;
}

GammaQuantileTable::GammaQuantileTable(GammaParams params, int points) : params_(params) {
  if (points < 2) throw ValidationError("GammaQuantileTable: need at least 2 points");
  x_lo_ = gamma_quantile(kQuantileClip, params.shape, params.scale);
  const double x_hi = gamma_quantile(1.0 - kQuantileClip, params.shape, params.scale);
  step_ = (x_hi - x_lo_) / (points - 1);
  cdf_.resize(points);
  for (int i = 0; i < points; ++i) cdf_[i] = gamma_cdf(x_lo_ + step_ * i, params.shape, params.scale);
}

double GammaQuantileTable::quantile(double p) const {
  if (cdf_.empty()) return gamma_quantile(p, params_.shape, params_.scale);
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), p);
  if (it == cdf_.begin()) {
    return gamma_quantile_bracketed(p, params_.shape, params_.scale, 0.0, x_lo_ * (1.0 + 1e-12));
  }
  if (it == cdf_.end()) return gamma_quantile(p, params_.shape, params_.scale);
  const auto hi_idx = static_cast<double>(it - cdf_.begin());
  const double hi = x_lo_ + step_ * hi_idx;
  const double lo = hi - step_;
  // Widen by a hair so that a root sitting exactly on a grid point stays inside.
  return gamma_quantile_bracketed(p, params_.shape, params_.scale, std::max(0.0, lo - 1e-12 * hi),
                                  hi * (1.0 + 1e-12));
}

StyleDistModel::StyleDistModel(std::vector<int> layer_channels, StyleModelOptions options)
    : layer_channels_(std::move(layer_channels)), options_(options) {
  if (layer_channels_.empty()) throw ValidationError("StyleDistModel: no styled layers");
  if (options_.table_points < 2) throw ValidationError("StyleDistModel: table_points must be >= 2");
  const auto& pr = options_.priors;
  if (!(pr.kappa0 > 0 && pr.alpha0 > 1 && pr.beta0 > 0 && pr.gamma_pseudo_count > 0 &&
        pr.gamma_prior_mean > 0 && pr.gamma_prior_var > 0 && pr.var_floor > 0)) {
    throw ValidationError("StyleDistModel: invalid priors");
  }
  for (int c : layer_channels_) {
    if (c < 1) throw ValidationError("StyleDistModel: channel count must be >= 1");
    const int modeled = options_.pooled_channels ? 1 : c;
    models_.emplace_back(modeled);
    tables_.emplace_back(modeled);
  }
  for (int l = 0; l < num_layers(); ++l) {
    for (int m = 0; m < static_cast<int>(models_[l].size()); ++m) refit(l, m);
  }
}

int StyleDistModel::model_index(int layer, int c) const {
  if (layer < 0 || layer >= num_layers() || c < 0 || c >= layer_channels_[layer]) {
    throw ValidationError("StyleDistModel: (layer, channel) out of range");
  }
  return options_.pooled_channels ? 0 : c;
}

const ChannelModel& StyleDistModel::channel(int layer, int c) const {
  return models_[layer][model_index(layer, c)];
}

void StyleDistModel::refit(int layer, int m) {
  const auto& pr = options_.priors;
  auto& cm = models_[layer][m];
  const auto& st = cm.stats;
  const double n = static_cast<double>(st.count);

  // Normal-Inverse-Gamma posterior; report the posterior mean and the std of the
  // Student-t posterior predictive.
  const double xbar = n > 0 ? st.sum_mean / n : 0.0;
  const double scatter = n > 0 ? std::max(st.sumsq_mean - n * xbar * xbar, 0.0) : 0.0;
  const double kappa_n = pr.kappa0 + n;
  const double mu_n = (pr.kappa0 * pr.mu0 + n * xbar) / kappa_n;
  const double alpha_n = pr.alpha0 + 0.5 * n;
  const double beta_n =
      pr.beta0 + 0.5 * scatter + pr.kappa0 * n * (xbar - pr.mu0) * (xbar - pr.mu0) / (2.0 * kappa_n);
  const double dof = 2.0 * alpha_n;
  const double scale_sq = beta_n * (kappa_n + 1.0) / (alpha_n * kappa_n);
  cm.gaussian.mean = mu_n;
  cm.gaussian.std = std::sqrt(scale_sq * dof / (dof - 2.0));

  // Gamma by moments, prior blended in as pseudo-samples.
  const double total = pr.gamma_pseudo_count + n;
  const double m1 = (pr.gamma_pseudo_count * pr.gamma_prior_mean + st.sum_std) / total;
  const double m2 =
      (pr.gamma_pseudo_count * (pr.gamma_prior_var + pr.gamma_prior_mean * pr.gamma_prior_mean) +
       st.sumsq_std) /
      total;
  const double var = std::max(m2 - m1 * m1, pr.var_floor);
  cm.gamma.shape = m1 * m1 / var;
  cm.gamma.scale = var / m1;

  if (!(cm.gaussian.std > 0) || !(cm.gamma.shape > 0) || !(cm.gamma.scale > 0) ||
      !std::isfinite(cm.gaussian.mean) || !std::isfinite(cm.gamma.shape) || !std::isfinite(cm.gamma.scale)) {
    throw NumericError("StyleDistModel: refit produced invalid parameters at layer " + std::to_string(layer + 1));
  }
  tables_[layer][m] = GammaQuantileTable(cm.gamma, options_.table_points);
}

void StyleDistModel::flush_update(StyleBuffer& buffer) {
  if (buffer.empty()) return;
  if (buffer.layer_channels() != layer_channels_) {
    throw ValidationError("flush_update: buffer layer layout does not match the model");
  }
  const auto& obs = buffer.observations();
  std::vector<double> means;
  std::vector<double> stds;
  for (int l = 0; l < num_layers(); ++l) {
    for (int m = 0; m < static_cast<int>(models_[l].size()); ++m) {
      means.clear();
      stds.clear();
      for (const auto& o : obs) {
        const auto& s = o[l];
        if (options_.pooled_channels) {
          means.insert(means.end(), s.mean.begin(), s.mean.end());
          stds.insert(stds.end(), s.std.begin(), s.std.end());
        } else {
          means.push_back(s.mean[m]);
          stds.push_back(s.std[m]);
        }
      }
      // Sorted summation makes the update depend only on the multiset of observations.
      std::sort(means.begin(), means.end());
      std::sort(stds.begin(), stds.end());
      auto& st = models_[l][m].stats;
      double s1 = 0, s2 = 0, t1 = 0, t2 = 0;
      for (double v : means) {
        s1 += v;
        s2 += v * v;
      }
      for (double v : stds) {
        t1 += v;
        t2 += v * v;
      }
      st.count += means.size();
      st.sum_mean += s1;
      st.sumsq_mean += s2;
      st.sum_std += t1;
      st.sumsq_std += t2;
      refit(l, m);
    }
  }
  ++flushes_;
  buffer.clear();
}

double StyleDistModel::std_quantile(int layer, int c, double p) const {
  return tables_[layer][model_index(layer, c)].quantile(p);
}

double StyleDistModel::mean_quantile(int layer, int c, double p) const {
  const auto& g = channel(layer, c).gaussian;
  return g.mean + g.std * normal_quantile(p);
}

bool StyleDistModel::operator==(const StyleDistModel& o) const {
  return layer_channels_ == o.layer_channels_ && options_ == o.options_ && flushes_ == o.flushes_ &&
         models_ == o.models_;
}

namespace {
constexpr std::string_view kStyleMagic = "STSEGSTY";
constexpr std::uint32_t kStyleVersion = 1;
}  // namespace

void StyleDistModel::save(const std::string& path) const {
  BinaryWriter w(path);
  w.put_magic(kStyleMagic);
  w.put(kStyleVersion);
  w.put_vector(layer_channels_);
  const auto& pr = options_.priors;
  for (double v : {pr.mu0, pr.kappa0, pr.alpha0, pr.beta0, pr.gamma_pseudo_count, pr.gamma_prior_mean,
                   pr.gamma_prior_var, pr.var_floor}) {
    w.put(v);
  }
  w.put<std::uint8_t>(options_.pooled_channels ? 1 : 0);
  w.put<std::int32_t>(options_.table_points);
  w.put<std::uint64_t>(flushes_);
  for (const auto& layer : models_) {
    for (const auto& cm : layer) {
      w.put(cm.gaussian.mean);
      w.put(cm.gaussian.std);
      w.put(cm.gamma.shape);
      w.put(cm.gamma.scale);
      w.put(cm.stats.count);
      w.put(cm.stats.sum_mean);
      w.put(cm.stats.sumsq_mean);
      w.put(cm.stats.sum_std);
      w.put(cm.stats.sumsq_std);
    }
  }
  w.close();
}

StyleDistModel StyleDistModel::load(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kStyleMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kStyleVersion) throw IoError(path + ": unsupported style model version " + std::to_string(version));
  auto layers = r.get_vector<int>(64);
  StyleModelOptions opt;
  auto& pr = opt.priors;
  for (double* v : {&pr.mu0, &pr.kappa0, &pr.alpha0, &pr.beta0, &pr.gamma_pseudo_count, &pr.gamma_prior_mean,
                    &pr.gamma_prior_var, &pr.var_floor}) {
    *v = r.get<double>();
  }
  opt.pooled_channels = r.get<std::uint8_t>() != 0;
  opt.table_points = r.get<std::int32_t>();
  StyleDistModel model(layers, opt);
  model.flushes_ = r.get<std::uint64_t>();
  for (int l = 0; l < model.num_layers(); ++l) {
    for (int m = 0; m < static_cast<int>(model.models_[l].size()); ++m) {
      auto& cm = model.models_[l][m];
      cm.gaussian.mean = r.get<double>();
      cm.gaussian.std = r.get<double>();
      cm.gamma.shape = r.get<double>();
      cm.gamma.scale = r.get<double>();
      cm.stats.count = r.get<std::uint64_t>();
      cm.stats.sum_mean = r.get<double>();
      cm.stats.sumsq_mean = r.get<double>();
      cm.stats.sum_std = r.get<double>();
      cm.stats.sumsq_std = r.get<double>();
      model.tables_[l][m] = GammaQuantileTable(cm.gamma, opt.table_points);
    }
  }
  return model;
}

namespace {

double clip_probability(double p) { return std::clamp(p, kQuantileClip, 1.0 - kQuantileClip); }

// Fisher-Yates with a portable bounded draw.
std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(uniform01(rng) * (i + 1));
    std::swap(perm[i], perm[std::min(j, i)]);
  }
  return perm;
}

}  // namespace

StratumBoundaries stratum_boundaries(const StyleDistModel& model, int layer, int channel, int strata) {
  if (strata < 1) throw ValidationError("stratum_boundaries: need at least one stratum");
  StratumBoundaries out;
  out.mean.resize(strata + 1);
  out.std.resize(strata + 1);
  for (int b = 0; b <= strata; ++b) {
    const double p = clip_probability(static_cast<double>(b) / strata);
    out.mean[b] = model.mean_quantile(layer, channel, p);
    out.std[b] = model.std_quantile(layer, channel, p);
  }
  return out;
}

std::optional<StyleBatch> sample_styles(const StyleDistModel& model, int batch, Rng& rng) {
  if (batch < 1) throw ValidationError("sample_styles: batch must be >= 1");
  if (!model.fitted()) return std::nullopt;
  StyleBatch out(model.num_layers());
  for (int l = 0; l < model.num_layers(); ++l) {
    const int channels = model.channels(l);
    out[l].assign(batch, StyleStats<double>(channels));
    for (int c = 0; c < channels; ++c) {
      const auto mean_perm = random_permutation(batch, rng);
      const auto std_perm = random_permutation(batch, rng);
      for (int i = 0; i < batch; ++i) {
        const double pm = clip_probability((mean_perm[i] + uniform01(rng)) / batch);
        const double ps = clip_probability((std_perm[i] + uniform01(rng)) / batch);
        out[l][i].mean[c] = model.mean_quantile(l, c, pm);
        out[l][i].std[c] = std::max(model.std_quantile(l, c, ps), kSampledStdFloor);
      }
    }
  }
  return out;
}

}  // namespace stseg
