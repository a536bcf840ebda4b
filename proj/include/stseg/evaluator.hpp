#pragma once

// Inference-only evaluation: source forward path, argmax, confusion accumulation.

#include <string>
#include <vector>

#include "stseg/checkpoint.hpp"
#include "stseg/report.hpp"

namespace stseg {

/// Argmax labels of the source path on images in [0,1]; processes `batch` items at a time.
LabelMap predict_labels(const SegNetwork& net, const Normalization& norm, const Tensor<float>& images, int batch = 16);

struct EvalOptions {
  std::string data_root = "data";
  /// Clean splits; a split whose samples carry corruption specs is broken down by kind
  /// and severity instead.
  std::vector<std::string> splits{"val", "unseen_T", "unseen_D", "unseen_Y", "val_c"};
  Grouping grouping;
  int batch = 16;
};

EvaluationResults evaluate(const ModelCheckpoint& ck, const EvalOptions& opts, const std::string& fingerprint);

/// Loads `checkpoint_path`, evaluates it and writes reports into `out_dir`.
EvaluationResults evaluate_checkpoint(const std::string& checkpoint_path, const EvalOptions& opts,
                                      const std::string& out_dir, const std::string& label);

}  // namespace stseg
