#pragma once

// Realistic style distribution: buffered observations, per-channel Gaussian (means)
// and Gamma (stds) models with streaming updates, and a stratified quantile sampler.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stseg/feature_stats.hpp"
#include "stseg/rng.hpp"

namespace stseg {

/// Holds realistic-style observations until enough have been gathered for an update.
class StyleBuffer {
 public:
  static constexpr int kDefaultCapacity = 256;

  explicit StyleBuffer(std::vector<int> layer_channels, int capacity = kDefaultCapacity);

  /// Appends one observation. Returns true when the buffer has reached capacity.
  bool push(const LayerStyles& obs);

  [[nodiscard]] bool flush_ready() const { return size() >= capacity_; }
  [[nodiscard]] int size() const { return static_cast<int>(observations_.size()); }
  [[nodiscard]] bool empty() const { return observations_.empty(); }
  [[nodiscard]] int capacity() const { return capacity_; }
  [[nodiscard]] std::uint64_t total_seen() const { return total_seen_; }
  [[nodiscard]] const std::vector<int>& layer_channels() const { return layer_channels_; }
  [[nodiscard]] const std::vector<LayerStyles>& observations() const { return observations_; }
  void clear() { observations_.clear(); }
  /// Replaces the contents, e.g. when resuming from a checkpoint.
  void restore(const std::vector<LayerStyles>& observations, std::uint64_t total_seen);

 private:
  std::vector<int> layer_channels_;
  int capacity_;
  std::uint64_t total_seen_ = 0;
  std::vector<LayerStyles> observations_;
};

/// Prior hyperparameters. Gaussian: Normal-Inverse-Gamma(mu0, kappa0, alpha0, beta0).
/// Gamma: moment matching blended with pseudo-samples of the given mean and variance.
struct StylePriors {
  double mu0 = 0.0;
  double kappa0 = 1.0;
  double alpha0 = 2.0;
  double beta0 = 1.0;
  double gamma_pseudo_count = 10.0;
  double gamma_prior_mean = 1.0;
  double gamma_prior_var = 0.25;
  double var_floor = 1e-8;

  bool operator==(const StylePriors&) const = default;
};

struct GaussianParams {
  double mean = 0.0;
  double std = 1.0;
  bool operator==(const GaussianParams&) const = default;
};

struct GammaParams {
  double shape = 1.0;
  double scale = 1.0;
  bool operator==(const GammaParams&) const = default;
};

/// Accumulated sufficient statistics of one modeled channel.
struct ChannelSuffStats {
  std::uint64_t count = 0;
  double sum_mean = 0.0;
  double sumsq_mean = 0.0;
  double sum_std = 0.0;
  double sumsq_std = 0.0;
  bool operator==(const ChannelSuffStats&) const = default;
};

struct ChannelModel {
  GaussianParams gaussian;
  GammaParams gamma;
  ChannelSuffStats stats;
  bool operator==(const ChannelModel&) const = default;
};

/// Tabulated Gamma CDF on a uniform grid of `points` abscissae spanning the central
/// [1e-6, 1 - 1e-6] probability mass. Used to bracket quantile searches.
class GammaQuantileTable {
 public:
  GammaQuantileTable() = default;
  GammaQuantileTable(GammaParams params, int points);

  [[nodiscard]] double quantile(double p) const;
  [[nodiscard]] int points() const { return static_cast<int>(cdf_.size()); }

 private:
  GammaParams params_;
  double x_lo_ = 0.0;
  double step_ = 0.0;
  std::vector<double> cdf_;
};

struct StyleModelOptions {
  StylePriors priors;
  /// Share one distribution across all channels of a layer instead of one per channel.
  bool pooled_channels = false;
  /// Number of stored CDF evaluation points per Gamma inversion table (population size Q).
  int table_points = 10000;

  bool operator==(const StyleModelOptions&) const = default;
};

class StyleDistModel {
 public:
  StyleDistModel() = default;
  explicit StyleDistModel(std::vector<int> layer_channels, StyleModelOptions options = {});

  /// Folds every buffered observation into the sufficient statistics, refits all
  /// channel distributions and empties the buffer. An empty buffer is a no-op.
  void flush_update(StyleBuffer& buffer);

  [[nodiscard]] bool fitted() const { return flushes_ > 0; }
  [[nodiscard]] std::uint64_t flush_count() const { return flushes_; }
  [[nodiscard]] int num_layers() const { return static_cast<int>(layer_channels_.size()); }
  [[nodiscard]] int channels(int layer) const { return layer_channels_.at(layer); }
  [[nodiscard]] const std::vector<int>& layer_channels() const { return layer_channels_; }
  [[nodiscard]] const StyleModelOptions& options() const { return options_; }

  /// Distribution used for channel `c` of styled layer `layer` (0-based).
  [[nodiscard]] const ChannelModel& channel(int layer, int c) const;

  /// Gamma quantile of a channel, bracketed by its table.
  [[nodiscard]] double std_quantile(int layer, int c, double p) const;
  [[nodiscard]] double mean_quantile(int layer, int c, double p) const;

  void save(const std::string& path) const;
  static StyleDistModel load(const std::string& path);

  /// Parameter and statistic equality (tables are derived state).
  bool operator==(const StyleDistModel& o) const;

 private:
  [[nodiscard]] int model_index(int layer, int c) const;
  void refit(int layer, int model_channel);

  std::vector<int> layer_channels_;
  StyleModelOptions options_;
  std::uint64_t flushes_ = 0;
  std::vector<std::vector<ChannelModel>> models_;  // [layer][modeled channel]
  std::vector<std::vector<GammaQuantileTable>> tables_;
};

/// Stratum edges for B strata: mean edges from the Gaussian, std edges from the Gamma.
/// Index 0 and B use the clipped probabilities 1e-6 and 1 - 1e-6.
struct StratumBoundaries {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kQuantileClip = 1e-6;
inline constexpr double kSampledStdFloor = 1e-5;

StratumBoundaries stratum_boundaries(const StyleDistModel& model, int layer, int channel, int strata);

/// Stratified style batch. Per channel, the B means cover each of the
/// B Gaussian quantile strata once and the B stds each of the B Gamma strata once; the
/// stratum-to-item assignment is an independent random permutation per channel and per
/// statistic. Returns nullopt if the model has never been fitted (cold start).
std::optional<StyleBatch> sample_styles(const StyleDistModel& model, int batch, Rng& rng);

}  // namespace stseg
