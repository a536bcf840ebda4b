#pragma once

// Run configuration. Every key has a default; a JSON file overrides any subset and
// command-line flags override the file. Unknown keys are rejected.

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "stseg/dataset.hpp"
#include "stseg/metrics.hpp"
#include "stseg/objectives.hpp"
#include "stseg/seg_network.hpp"

namespace stseg {

struct TextureConfig {
  std::string checkpoint = "texture/texture_encoder.bin";
  std::string corpus_dir;  ///< optional folder of class subfolders; empty = procedural corpus
  int classes = 6;         ///< procedural corpus: first N material classes
  int patch = 64;
  int train_per_class = 240;
  int val_per_class = 60;
  int epochs = 6;
  int batch = 16;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double min_accuracy = 0.90;
};

void validate(const TextureConfig& cfg);

/// Source of the statistics fed to the style-augmented path.
enum class StyleMode {
  kNone,       ///< no augmented path
  kRandom,     ///< perturbations of the batch's own statistics
  kRealistic,  ///< statistics of unlabeled realistic images, used as-is
  kGenerated,  ///< stratified samples from the learned style distribution
};

std::string style_mode_name(StyleMode m);
StyleMode style_mode_from_name(const std::string& name);

struct OptimizerConfig {
  std::string kind = "adamw";
  double lr = 6e-5;
  std::array<double, 2> betas{0.9, 0.999};
  double weight_decay = 0.01;
};

struct ScheduleConfig {
  std::string kind = "poly";
  double power = 1.0;
};

struct TrainConfig {
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  int batch_size = 8;
  int unlabeled_batch_size = 8;
  long steps = 8000;
  StyleMode style_mode = StyleMode::kGenerated;
  bool tr = true;
  double ema_alpha = 0.7;
  int buffer_capacity = 256;
  std::vector<int> styled_layers{1, 2};
  std::array<double, 4> texture_weights{0.05, 0.025, 0.01, 0.005};
  std::set<int> natural_classes{2, 3, 4, 5};
  LossWeights loss_weights;
  double random_style_scale = 0.5;
  int gamma_table_points = 10000;
  long checkpoint_every = 1000;
  long log_every = 100;
  /// Unlabeled realistic images: a dataset split name under data.root or a PNG folder.
  std::string realistic_source = "realistic";

  [[nodiscard]] bool se() const { return style_mode == StyleMode::kGenerated; }
};

struct EvalConfig {
  std::vector<std::string> splits{"val", "unseen_T", "unseen_D", "unseen_Y", "val_c"};
  Grouping grouping;
  int batch = 16;
};

struct AblationRowSpec {
  std::string label;
  StyleMode style_mode = StyleMode::kNone;
  bool tr = false;
};

/// The six ablation rows, in table order.
std::vector<AblationRowSpec> default_ablation_rows();
/// Directory-safe form of a row label ("Baseline + SE + TR" -> "baseline_se_tr").
std::string row_slug(const std::string& label);

struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> rows;  ///< subset of row labels; empty = all six
};

struct Config {
  std::uint64_t seed = 0;
  DataConfig data;
  TextureConfig texture;
  NetworkConfig model;
  TrainConfig train;
  EvalConfig eval;
  AblationConfig ablation;
};

void validate(const Config& cfg);

/// Applies the keys of `json_text` on top of `base`.
Config config_from_json(const std::string& json_text, Config base = {});
Config load_config(const std::string& path);
/// The fully resolved configuration, every key present.
std::string config_to_json(const Config& cfg);

}  // namespace stseg
