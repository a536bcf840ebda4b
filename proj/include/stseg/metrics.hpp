#pragma once

// Confusion-matrix segmentation metrics: per-class IoU and accuracy, their means over
// classes present in the ground truth, and precision/recall of a two-group merge.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stseg/error.hpp"
#include "stseg/tensor.hpp"

namespace stseg {

/// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes) : n_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
    if (num_classes < 1) throw ValidationError("confusion matrix needs at least one class");
  }

  [[nodiscard]] int num_classes() const { return n_; }
  [[nodiscard]] std::uint64_t operator()(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth) * n_ + pred]; }
  std::uint64_t& at(int truth, int pred) { return counts_[static_cast<std::size_t>(truth) * n_ + pred]; }
  [[nodiscard]] const std::vector<std::uint64_t>& counts() const { return counts_; }

  [[nodiscard]] std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
  }
  [[nodiscard]] std::uint64_t row_sum(int c) const {
    std::uint64_t t = 0;
    for (int j = 0; j < n_; ++j) t += (*this)(c, j);
    return t;
  }
  [[nodiscard]] std::uint64_t col_sum(int c) const {
    std::uint64_t t = 0;
    for (int i = 0; i < n_; ++i) t += (*this)(i, c);
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.n_ != n_) throw ValidationError("confusion matrix merge: class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int n_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Adds one count per pixel at (truth, prediction).
inline void accumulate_confusion(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& truth) {
  if (pred.batch != truth.batch || pred.height != truth.height || pred.width != truth.width) {
    throw ValidationError("accumulate_confusion: prediction and ground truth differ in shape");
  }
  const int n = cm.num_classes();
  for (std::size_t i = 0; i < truth.ids.size(); ++i) {
    const int t = truth.ids[i];
    const int p = pred.ids[i];
    if (t < 0 || t >= n || p < 0 || p >= n) {
      throw ValidationError("accumulate_confusion: class id out of range (truth " + std::to_string(t) + ", pred " +
                            std::to_string(p) + ")");
    }
    ++cm.at(t, p);
  }
}

struct ClassMetrics {
  std::vector<std::optional<double>> iou;  ///< empty for classes absent from the ground truth
  std::vector<std::optional<double>> acc;
  double miou = 0.0;
  double macc = 0.0;
  int classes_present = 0;
};

inline ClassMetrics miou_macc(const ConfusionMatrix& cm) {
  const int n = cm.num_classes();
  ClassMetrics m;
  m.iou.resize(n);
  m.acc.resize(n);
  double iou_sum = 0.0;
  double acc_sum = 0.0;
  for (int c = 0; c < n; ++c) {
    const std::uint64_t gt = cm.row_sum(c);
    if (gt == 0) continue;
    const double tp = static_cast<double>(cm(c, c));
    const double fp = static_cast<double>(cm.col_sum(c)) - tp;
    const double fn = static_cast<double>(gt) - tp;
    m.iou[c] = tp / (tp + fp + fn);
    m.acc[c] = tp / (tp + fn);
    iou_sum += *m.iou[c];
    acc_sum += *m.acc[c];
    ++m.classes_present;
  }
  if (m.classes_present > 0) {
    m.miou = iou_sum / m.classes_present;
    m.macc = acc_sum / m.classes_present;
  }
  return m;
}

struct Grouping {
  std::set<int> traversable{1, 2, 3, 4};
  std::set<int> non_traversable{0, 5, 6, 7};
  bool operator==(const Grouping&) const = default;
};

/// Throws unless the two groups are disjoint and together cover 0..num_classes-1.
inline void validate(const Grouping& g, int num_classes) {
  std::set<int> all;
  for (int c : g.traversable) all.insert(c);
  for (int c : g.non_traversable) {
    if (g.traversable.contains(c)) throw ValidationError("grouping: class " + std::to_string(c) + " is in both groups");
    all.insert(c);
  }
  if (static_cast<int>(all.size()) != num_classes || *all.begin() != 0 || *all.rbegin() != num_classes - 1) {
    throw ValidationError("grouping: groups must partition classes 0.." + std::to_string(num_classes - 1));
  }
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool operator==(const PrecisionRecall&) const = default;
};

struct GroupedPR {
  PrecisionRecall traversable;
  PrecisionRecall non_traversable;
  bool operator==(const GroupedPR&) const = default;
};

/// Merges classes into the two groups, then precision = TP/(TP+FP) and
/// recall = TP/(TP+FN) per group; a zero denominator yields 0.
inline GroupedPR precision_recall(const ConfusionMatrix& cm, const Grouping& grouping) {
  validate(grouping, cm.num_classes());
  const int n = cm.num_classes();
  std::uint64_t merged[2][2] = {{0, 0}, {0, 0}};  // [truth group][pred group], 0 = traversable
  for (int t = 0; t < n; ++t) {
    const int gt = grouping.traversable.contains(t) ? 0 : 1;
    for (int p = 0; p < n; ++p) {
      const int gp = grouping.traversable.contains(p) ? 0 : 1;
      merged[gt][gp] += cm(t, p);
    }
  }
  auto group = [&](int g) {
    const double tp = static_cast<double>(merged[g][g]);
    const double fp = static_cast<double>(merged[1 - g][g]);
    const double fn = static_cast<double>(merged[g][1 - g]);
    return PrecisionRecall{tp + fp > 0 ? tp / (tp + fp) : 0.0, tp + fn > 0 ? tp / (tp + fn) : 0.0};
  };
  return {group(0), group(1)};
}

}  // namespace stseg
