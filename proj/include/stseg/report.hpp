#pragma once

// Metrics reports: JSON (versioned), severity-curve SVG charts and markdown tables.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stseg/metrics.hpp"

namespace stseg {

inline constexpr int kReportVersion = 1;

struct MetricsReport {
  std::string split;
  std::string fingerprint;  ///< identifies the evaluated checkpoint
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> iou;
  std::vector<std::optional<double>> acc;
  double miou = 0.0;
  double macc = 0.0;
  int classes_present = 0;
  Grouping grouping;
  GroupedPR groups;
  std::uint64_t samples = 0;
  std::uint64_t pixels = 0;
  std::vector<std::uint64_t> confusion;  ///< row-major [truth][pred]

  bool operator==(const MetricsReport&) const = default;
};

MetricsReport make_report(const ConfusionMatrix& cm, const Grouping& grouping, const std::string& split,
                          const std::string& fingerprint, std::uint64_t samples,
                          const std::vector<std::string>& class_names);

/// Clean splits plus corrupted results keyed by corruption name, then severity.
struct EvaluationResults {
  std::string fingerprint;
  std::vector<MetricsReport> splits;
  std::map<std::string, std::map<int, MetricsReport>> corruptions;

  bool operator==(const EvaluationResults&) const = default;

  /// Mean over every (kind, severity) cell; nullopt when there are no corrupted results.
  [[nodiscard]] std::optional<double> corrupted_miou() const;
  [[nodiscard]] std::optional<double> corrupted_macc() const;
  [[nodiscard]] const MetricsReport* split(const std::string& name) const;
};

std::string results_to_json(const EvaluationResults& r);
EvaluationResults results_from_json(const std::string& text);

EvaluationResults load_results(const std::string& path);

/// Writes report.json, severity_miou.svg, severity_macc.svg and summary.md into out_dir.
void emit_report(const EvaluationResults& r, const std::string& out_dir, const std::string& method_label);

/// Line chart with one curve per corruption kind over severities 1..5.
std::string severity_chart_svg(const EvaluationResults& r, bool use_macc);

/// Rows = methods, columns = the eight corruption kinds (mIoU / mAcc averaged over
/// severities) and their average.
std::string corruption_table_markdown(const std::vector<std::pair<std::string, EvaluationResults>>& rows);

struct AggregateRow {
  std::string label;
  int runs = 0;
  double clean_miou = 0.0;
  double clean_macc = 0.0;
  std::optional<double> corrupted_miou;
  std::optional<double> corrupted_macc;
  std::optional<double> unseen_miou;
  std::optional<double> unseen_macc;
  double corrupted_miou_sd = 0.0;
};

std::string aggregate_table_markdown(const std::vector<AggregateRow>& rows);

/// FNV-1a of a file's bytes, as 16 hex digits.
std::string file_fingerprint(const std::string& path);

}  // namespace stseg
