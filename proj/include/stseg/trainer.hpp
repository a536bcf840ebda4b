#pragma once

// Training loop with the source path, the style-augmented path, texture
// regularization and an EMA encoder; plus the ablation grid and its report.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stseg/config.hpp"
#include "stseg/objectives.hpp"
#include "stseg/report.hpp"

namespace stseg {

struct StepRecord {
  long step = 0;
  LossBundle loss;
  double lr = 0.0;
  bool augmented = false;  ///< whether the style-augmented path ran at this step
};

struct TrainOptions {
  std::string run_dir;
  bool force = false;   ///< wipe an existing run directory
  bool resume = false;  ///< continue from the newest checkpoint in run_dir
  bool evaluate_at_end = true;
  std::string label;  ///< human-readable run name stored in run.json
  /// Stops (as if interrupted) once this many steps have completed; -1 = run to the end.
  long stop_after = -1;
  /// Test hook: poisons one weight with NaN right before this step.
  long inject_nan_at = -1;
  bool verbose = true;
};

struct TrainResult {
  std::string run_dir;
  std::string final_checkpoint;  ///< empty when stopped early
  std::vector<StepRecord> log;   ///< steps executed by this call
  std::optional<EvaluationResults> evaluation;
};

/// Fails with ValidationError on configuration problems (missing texture checkpoint with
/// TR on, mismatched stage widths, ...) and NumericError after writing
/// checkpoints/last_good.ckpt when a loss turns non-finite.
TrainResult train(const Config& cfg, const TrainOptions& opts);

/// Reads losses.csv of a run directory.
std::vector<StepRecord> read_loss_log(const std::string& path);

struct AblationOptions {
  std::string out_dir = "runs/ablation";
  bool force = false;
  bool verbose = true;
};

/// Trains and evaluates every (row, seed) pair into <out>/<row slug>/seed_<s>.
/// Completed runs are reused and interrupted ones resumed.
void run_ablation(const Config& cfg, const AblationOptions& opts);

struct AblationSummary {
  std::vector<AggregateRow> rows;
  std::string table_markdown;       ///< one row per ablation configuration
  std::string corruption_markdown;  ///< per-kind corrupted results per configuration
};

/// Aggregates reports of an ablation directory (mean over seeds) and writes
/// summary.md and summary.json into it.
AblationSummary aggregate_ablation(const std::string& ablation_dir);

}  // namespace stseg
