#include <gtest/gtest.h>

#include <set>

#include "stseg/metrics.hpp"
#include "test_util.hpp"

using namespace stseg;
using stseg::test::random_labels;

namespace {

struct OracleMetrics {
  double miou = 0.0;
  double macc = 0.0;
  std::vector<double> iou, acc;
  GroupedPR pr;
};

// Per-class pixel sets, intersections and unions; groups merged pixel by pixel.
OracleMetrics pixel_oracle(const LabelMap& pred, const LabelMap& truth, int classes, const Grouping& g) {
  OracleMetrics o;
  o.iou.assign(classes, -1);
  o.acc.assign(classes, -1);
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    std::set<std::size_t> in_truth, in_pred;
    for (std::size_t i = 0; i < truth.ids.size(); ++i) {
      if (truth.ids[i] == c) in_truth.insert(i);
      if (pred.ids[i] == c) in_pred.insert(i);
    }
    if (in_truth.empty()) continue;
    std::size_t inter = 0;
    for (auto i : in_truth) inter += in_pred.count(i);
    std::set<std::size_t> uni = in_truth;
    uni.insert(in_pred.begin(), in_pred.end());
    o.iou[c] = static_cast<double>(inter) / static_cast<double>(uni.size());
    o.acc[c] = static_cast<double>(inter) / static_cast<double>(in_truth.size());
    o.miou += o.iou[c];
    o.macc += o.acc[c];
    ++present;
  }
  o.miou /= present;
  o.macc /= present;
  auto group_pr = [&](const std::set<int>& members) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.ids.size(); ++i) {
      const bool t = members.contains(truth.ids[i]);
      const bool p = members.contains(pred.ids[i]);
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    return PrecisionRecall{tp + fp > 0 ? tp / (tp + fp) : 0.0, tp + fn > 0 ? tp / (tp + fn) : 0.0};
  };
  o.pr = {group_pr(g.traversable), group_pr(g.non_traversable)};
  return o;
}

}  // namespace

TEST(Confusion, CountsAndCommutativity) {
  ConfusionMatrix cm(8);
  accumulate_confusion(cm, LabelMap(1, 2, 2, 3), LabelMap(1, 2, 2, 3));
  EXPECT_EQ(cm(3, 3), 4u);
  EXPECT_EQ(cm.total(), 4u);

  Rng rng(1);
  const auto p1 = random_labels(2, 8, 8, 8, rng), t1 = random_labels(2, 8, 8, 8, rng);
  const auto p2 = random_labels(3, 8, 8, 8, rng), t2 = random_labels(3, 8, 8, 8, rng);
  ConfusionMatrix a(8), b(8), c(8), d(8);
  accumulate_confusion(a, p1, t1);
  accumulate_confusion(a, p2, t2);
  accumulate_confusion(b, p2, t2);
  accumulate_confusion(b, p1, t1);
  accumulate_confusion(c, p1, t1);
  accumulate_confusion(d, p2, t2);
  c += d;
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a == c);
  EXPECT_EQ(a.total(), 5u * 64u);
}

TEST(Confusion, MatchesPixelLoopCounts) {
  Rng rng(2);
  const auto p = random_labels(4, 8, 8, 8, rng), t = random_labels(4, 8, 8, 8, rng);
  ConfusionMatrix cm(8);
  accumulate_confusion(cm, p, t);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      std::uint64_t n = 0;
      for (std::size_t k = 0; k < t.ids.size(); ++k) n += (t.ids[k] == i && p.ids[k] == j);
      EXPECT_EQ(cm(i, j), n);
    }
  }
}

TEST(Confusion, RejectsBadInputs) {
  ConfusionMatrix cm(4);
  EXPECT_THROW(accumulate_confusion(cm, LabelMap(1, 2, 2), LabelMap(1, 2, 3)), ValidationError);
  EXPECT_THROW(accumulate_confusion(cm, LabelMap(1, 2, 2, 4), LabelMap(1, 2, 2)), ValidationError);
  EXPECT_THROW(accumulate_confusion(cm, LabelMap(1, 2, 2), LabelMap(1, 2, 2, -1)), ValidationError);
  ConfusionMatrix other(5);
  EXPECT_THROW(cm += other, ValidationError);
}

TEST(Metrics, HandCaseAndPerfectPrediction) {
  LabelMap truth(1, 2, 2);
  truth.ids = {0, 0, 1, 1};
  ConfusionMatrix cm(8);
  accumulate_confusion(cm, LabelMap(1, 2, 2, 0), truth);
  const auto m = miou_macc(cm);
  EXPECT_EQ(*m.iou[0], 0.5);
  EXPECT_EQ(*m.iou[1], 0.0);
  EXPECT_EQ(m.miou, 0.25);
  EXPECT_EQ(*m.acc[0], 1.0);
  EXPECT_EQ(*m.acc[1], 0.0);
  EXPECT_EQ(m.macc, 0.5);
  EXPECT_EQ(m.classes_present, 2);
  EXPECT_FALSE(m.iou[5].has_value());

  ConfusionMatrix perfect(8);
  Rng rng(3);
  const auto y = random_labels(2, 8, 8, 8, rng);
  accumulate_confusion(perfect, y, y);
  const auto pm = miou_macc(perfect);
  EXPECT_EQ(pm.miou, 1.0);
  EXPECT_EQ(pm.macc, 1.0);
  const auto pr = precision_recall(perfect, Grouping{});
  EXPECT_EQ(pr.traversable, (PrecisionRecall{1.0, 1.0}));
  EXPECT_EQ(pr.non_traversable, (PrecisionRecall{1.0, 1.0}));
}

TEST(Metrics, AllTraversablePredictionClosedForm) {
  LabelMap truth(1, 2, 2);
  truth.ids = {1, 2, 0, 7};
  ConfusionMatrix cm(8);
  accumulate_confusion(cm, LabelMap(1, 2, 2, 3), truth);
  const auto pr = precision_recall(cm, Grouping{});
  EXPECT_EQ(pr.traversable.precision, 0.5);
  EXPECT_EQ(pr.traversable.recall, 1.0);
  EXPECT_EQ(pr.non_traversable.recall, 0.0);
  EXPECT_EQ(pr.non_traversable.precision, 0.0);
}

TEST(Metrics, ExactlyMatchPixelOracleOnRandomMaps) {
  Rng rng(4);
  const Grouping g;
  for (int trial = 0; trial < 100; ++trial) {
    // some trials draw from a subset of classes so that absent classes are exercised
    const int classes = trial % 3 == 0 ? 5 : 8;
    const auto p = random_labels(1, 8, 8, 8, rng);
    const auto t = random_labels(1, 8, 8, classes, rng);
    ConfusionMatrix cm(8);
    accumulate_confusion(cm, p, t);
    const auto m = miou_macc(cm);
    const auto o = pixel_oracle(p, t, 8, g);
    EXPECT_EQ(m.miou, o.miou);
    EXPECT_EQ(m.macc, o.macc);
    for (int c = 0; c < 8; ++c) {
      if (o.iou[c] < 0) {
        EXPECT_FALSE(m.iou[c].has_value());
      } else {
        EXPECT_EQ(*m.iou[c], o.iou[c]);
        EXPECT_EQ(*m.acc[c], o.acc[c]);
        EXPECT_LE(*m.iou[c], *m.acc[c]);
      }
    }
    const auto pr = precision_recall(cm, g);
    EXPECT_EQ(pr.traversable, o.pr.traversable);
    EXPECT_EQ(pr.non_traversable, o.pr.non_traversable);
  }
}

TEST(Metrics, InvariantToPixelOrder) {
  Rng rng(5);
  auto p = random_labels(1, 8, 8, 8, rng), t = random_labels(1, 8, 8, 8, rng);
  ConfusionMatrix a(8), b(8);
  accumulate_confusion(a, p, t);
  std::reverse(p.ids.begin(), p.ids.end());
  std::reverse(t.ids.begin(), t.ids.end());
  accumulate_confusion(b, p, t);
  EXPECT_EQ(miou_macc(a).miou, miou_macc(b).miou);
}

TEST(Grouping, MustPartitionClasses) {
  EXPECT_NO_THROW(validate(Grouping{}, 8));
  EXPECT_THROW(validate(Grouping{{1, 2}, {0, 2, 3}}, 4), ValidationError);
  EXPECT_THROW(validate(Grouping{{1, 2}, {0}}, 4), ValidationError);
  EXPECT_THROW(validate(Grouping{{1, 2, 9}, {0, 3}}, 4), ValidationError);
  ConfusionMatrix cm(4);
  EXPECT_THROW(precision_recall(cm, Grouping{{1}, {0, 2}}), ValidationError);
}
