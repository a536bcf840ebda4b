#pragma once

// On-disk synthetic dataset: <root>/<split>/{images,labels}/<id>.png plus manifest.json.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stseg/corruption.hpp"
#include "stseg/tensor.hpp"

namespace stseg {

inline constexpr int kManifestVersion = 1;

struct SampleRecord {
  std::string id;
  std::uint64_t seed = 0;
  std::string domain_tag;
  std::optional<CorruptionSpec> corruption;
  std::string clean_id;  ///< id of the uncorrupted source sample; equals id when clean
  std::string image;     ///< path relative to the split directory
  std::string label;     ///< empty for unlabeled pools

  bool operator==(const SampleRecord&) const = default;
};

/// Per-channel input normalization, measured on the training split.
struct Normalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.25, 0.25, 0.25};
  bool operator==(const Normalization&) const = default;
};

struct Manifest {
  int version = kManifestVersion;
  std::string split;
  int height = 0;
  int width = 0;
  int num_classes = 8;
  std::vector<std::string> class_names;
  Normalization normalization;
  std::vector<SampleRecord> samples;

  bool operator==(const Manifest&) const = default;
};

void save_manifest(const std::string& path, const Manifest& m);
Manifest load_manifest(const std::string& path);

struct DataConfig {
  std::string root = "data";
  int height = 64;
  int width = 64;
  int train = 2000;
  int val = 200;
  int unseen = 200;  ///< scenes per unseen domain
  std::vector<std::string> unseen_domains{"T", "D", "Y"};
  int realistic = 1000;  ///< unlabeled randomized-palette pool
  std::string corrupt_source = "val";
  int corrupt_count = 200;  ///< first N samples of corrupt_source are corrupted
  std::vector<CorruptionKind> corruptions{kAllCorruptions.begin(), kAllCorruptions.end()};
  std::vector<int> severities{1, 2, 3, 4, 5};
};

void validate(const DataConfig& cfg);

/// Splits: train, val, unseen_<tag>..., realistic and the corrupted copy of the
/// validation split ("val_c"). Throws ValidationError when a manifest would be
/// overwritten and `force` is false.
void generate_dataset(const DataConfig& cfg, std::uint64_t master_seed, bool force);

/// Writes one clean split of procedural scenes.
Manifest generate_split(const std::string& root, const std::string& split, const std::string& domain_tag, int count,
                        int height, int width, std::uint64_t master_seed, const Normalization& norm, bool force);

/// One corrupted copy per (sample, kind, severity) of the first `limit` clean samples
/// (all when limit < 0). Labels are copied unchanged.
Manifest build_corrupted_set(const std::string& root, const std::string& clean_split, const std::string& out_split,
                             const std::vector<CorruptionKind>& kinds, const std::vector<int>& severities,
                             std::uint64_t master_seed, bool force, int limit = -1);

/// Mean and std per channel over a list of [1,3,H,W] images.
Normalization measure_normalization(const std::vector<Tensor<float>>& images);

struct LoadedSplit {
  Manifest manifest;
  std::vector<Tensor<float>> images;  ///< [1,3,H,W] each, values in [0,1]
  std::vector<LabelMap> labels;       ///< empty for unlabeled splits
};

LoadedSplit load_split(const std::string& root, const std::string& split);

/// All PNG files of a directory (sorted by name) as [1,3,H,W] images.
std::vector<Tensor<float>> load_image_folder(const std::string& dir);

/// Stacks images (and optionally labels) selected by `indices` into one batch.
Tensor<float> stack_images(const std::vector<Tensor<float>>& images, const std::vector<int>& indices);
LabelMap stack_labels(const std::vector<LabelMap>& labels, const std::vector<int>& indices);

/// (x - mean) / std per channel.
Tensor<float> normalize(const Tensor<float>& images, const Normalization& norm);

}  // namespace stseg
