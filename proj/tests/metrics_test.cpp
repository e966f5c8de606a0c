#include "etd/metrics.hpp"

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "test_util.hpp"

namespace {

using namespace etd;

// Mann-Whitney oracle: fraction of (positive, negative) pairs ranked
// correctly, ties counted one half.
double pair_count_auc(const std::vector<double>& scores, const std::vector<Label>& y,
                      Label positive) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != positive) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] == positive) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

TEST(Confusion, CountsCells) {
  const std::vector<Label> truth{Label::Normal, Label::Normal, Label::Theft, Label::Theft};
  const std::vector<Label> pred{Label::Normal, Label::Theft, Label::Theft, Label::Normal};
  const ConfusionMatrix cm = confusion(truth, pred, Label::Normal);
  EXPECT_EQ(cm.tp, 1u);
  EXPECT_EQ(cm.fn, 1u);
  EXPECT_EQ(cm.fp, 1u);
  EXPECT_EQ(cm.tn, 1u);
  EXPECT_EQ(cm.total(), truth.size());
}

TEST(Confusion, PerfectPredictionsHaveNoErrors) {
  const std::vector<Label> truth{Label::Normal, Label::Theft, Label::Theft};
  const ConfusionMatrix cm = confusion(truth, truth, Label::Normal);
  EXPECT_EQ(cm.fn, 0u);
  EXPECT_EQ(cm.fp, 0u);
}

TEST(Confusion, FlippingThePositiveClassSwapsCells) {
  std::mt19937 gen(5);
  std::vector<Label> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(gen() % 5 ? Label::Normal : Label::Theft);
    pred.push_back(gen() % 4 ? truth.back() : (gen() % 2 ? Label::Normal : Label::Theft));
  }
  const ConfusionMatrix a = confusion(truth, pred, Label::Normal);
  const ConfusionMatrix b = confusion(truth, pred, Label::Theft);
  EXPECT_EQ(a.tp, b.tn);
  EXPECT_EQ(a.tn, b.tp);
  EXPECT_EQ(a.fn, b.fp);
  EXPECT_EQ(a.fp, b.fn);
}

TEST(Confusion, RejectsLengthMismatchAndEmpty) {
  const std::vector<Label> one{Label::Normal};
  const std::vector<Label> two{Label::Normal, Label::Theft};
  EXPECT_THROW(confusion(one, two, Label::Normal), std::invalid_argument);
  EXPECT_THROW(confusion({}, {}, Label::Normal), std::invalid_argument);
}

// The published confusion matrix for this task: tp=11536, fn=140, fp=109,
// tn=1085 with normal as the positive class.
TEST(PrfAccuracy, ReferenceMatrixReproducesTheReportedScores) {
  const ConfusionMatrix cm{11536, 140, 109, 1085, Label::Normal};
  EXPECT_EQ(cm.total(), 12870u);
  const Prfa got = prf_accuracy(cm);
  EXPECT_NEAR(got.precision, 11536.0 / 11645.0, 1e-15);
  EXPECT_NEAR(got.recall, 11536.0 / 11676.0, 1e-15);
  EXPECT_NEAR(got.precision, 0.99064, 5e-6);
  EXPECT_NEAR(got.recall, 0.98801, 5e-6);
  EXPECT_NEAR(got.f1, 0.98932, 5e-6);
  EXPECT_NEAR(got.accuracy, 0.98065, 5e-6);
}

TEST(PrfAccuracy, ZeroDenominatorsYieldZero) {
  // Positive class never predicted and never present.
  const ConfusionMatrix cm{0, 0, 0, 25, Label::Theft};
  const Prfa got = prf_accuracy(cm);
  EXPECT_EQ(got.precision, 0.0);
  EXPECT_EQ(got.recall, 0.0);
  EXPECT_EQ(got.f1, 0.0);
  EXPECT_DOUBLE_EQ(got.accuracy, 1.0);
}

TEST(PrfAccuracy, F1IsSymmetricInPrecisionAndRecall) {
  std::mt19937 gen(11);
  for (int rep = 0; rep < 50; ++rep) {
    ConfusionMatrix cm;
    cm.tp = gen() % 100 + 1;
    cm.fn = gen() % 100;
    cm.fp = gen() % 100;
    cm.tn = gen() % 100;
    ConfusionMatrix swapped = cm;
    std::swap(swapped.fn, swapped.fp);  // swaps precision and recall
    const Prfa a = prf_accuracy(cm);
    const Prfa b = prf_accuracy(swapped);
    EXPECT_NEAR(a.f1, b.f1, 1e-12);
  }
}

TEST(RocAuc, HandValues) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.1},
                           std::vector<Label>{Label::Theft, Label::Normal}, Label::Theft),
                   1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.4, 0.4, 0.4, 0.4},
                           std::vector<Label>{Label::Theft, Label::Normal, Label::Theft,
                                              Label::Normal},
                           Label::Theft),
                   0.5);
  // pos {0.8, 0.4}, neg {0.6, 0.2}: 3 of 4 pairs ordered correctly.
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.8, 0.4, 0.6, 0.2},
                           std::vector<Label>{Label::Theft, Label::Theft, Label::Normal,
                                              Label::Normal},
                           Label::Theft),
                   0.75);
}

TEST(RocAuc, RejectsSingleClassInput) {
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2},
                       std::vector<Label>{Label::Theft, Label::Theft}, Label::Theft),
               std::invalid_argument);
}

void random_scored_labels(std::mt19937& gen, std::size_t n, std::vector<double>& scores,
                          std::vector<Label>& y) {
  // Scores from a small discrete grid so ties actually happen.
  std::uniform_int_distribution<int> grid(0, 20);
  std::uniform_int_distribution<int> coin(0, 3);
  scores.clear();
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    scores.push_back(static_cast<double>(grid(gen)) / 20.0);
    y.push_back(coin(gen) == 0 ? Label::Theft : Label::Normal);
  }
  y[0] = Label::Theft;
  y[1] = Label::Normal;
}

TEST(RocAuc, TrapezoidEqualsPairCountOracle) {
  std::mt19937 gen(2024);
  std::uniform_int_distribution<std::size_t> size(2, 200);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> scores;
    std::vector<Label> y;
    random_scored_labels(gen, size(gen), scores, y);
    const double trap = roc_auc(scores, y, Label::Theft);
    const double pairs = pair_count_auc(scores, y, Label::Theft);
    EXPECT_NEAR(trap, pairs, 1e-9) << "rep " << rep;
  }
}

TEST(RocAuc, InvariantUnderStrictlyIncreasingTransform) {
  std::mt19937 gen(7);
  std::vector<double> scores;
  std::vector<Label> y;
  random_scored_labels(gen, 150, scores, y);
  const double base = roc_auc(scores, y, Label::Theft);
  std::vector<double> transformed(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) transformed[i] = std::exp(3.0 * scores[i]);
  EXPECT_NEAR(roc_auc(transformed, y, Label::Theft), base, 1e-12);
}

TEST(RocAuc, ComplementOfNegatedScoresIsOne) {
  std::mt19937 gen(8);
  std::vector<double> scores;
  std::vector<Label> y;
  random_scored_labels(gen, 150, scores, y);
  std::vector<double> negated(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) negated[i] = -scores[i];
  EXPECT_NEAR(roc_auc(scores, y, Label::Theft) + roc_auc(negated, y, Label::Theft), 1.0, 1e-12);
}

TEST(RocCurve, StartsAtOriginEndsAtOne) {
  std::mt19937 gen(9);
  std::vector<double> scores;
  std::vector<Label> y;
  random_scored_labels(gen, 60, scores, y);
  const auto points = roc_curve(scores, y, Label::Theft);
  EXPECT_EQ(points.front(), (std::pair<double, double>{0.0, 0.0}));
  EXPECT_EQ(points.back(), (std::pair<double, double>{1.0, 1.0}));
  for (std::size_t i = 1; i < points.size(); ++i) {
    EXPECT_GE(points[i].first, points[i - 1].first);
    EXPECT_GE(points[i].second, points[i - 1].second);
  }
}

TEST(Evaluate, ReportsBothOrientations) {
  const std::vector<Label> truth{Label::Normal, Label::Normal, Label::Normal, Label::Theft,
                                 Label::Theft};
  const std::vector<Label> pred{Label::Normal, Label::Normal, Label::Theft, Label::Theft,
                                Label::Theft};
  const std::vector<double> theft_scores{0.1, 0.2, 0.7, 0.8, 0.9};
  const MetricsReport report = evaluate(truth, pred, theft_scores, Label::Normal);
  EXPECT_EQ(report.positive_class, Label::Normal);
  EXPECT_EQ(report.primary.matrix.positive_class, Label::Normal);
  EXPECT_EQ(report.flipped.matrix.positive_class, Label::Theft);
  EXPECT_EQ(report.primary.matrix.tp, 2u);
  EXPECT_EQ(report.flipped.matrix.tp, 2u);
  EXPECT_DOUBLE_EQ(report.primary.accuracy, report.flipped.accuracy);
  // Same ranking seen from either side.
  EXPECT_NEAR(report.primary.auc, report.flipped.auc, 1e-12);
  EXPECT_DOUBLE_EQ(report.flipped.auc, 1.0);

  const nlohmann::json j = report;
  EXPECT_EQ(j.at("positive_class"), "normal");
  EXPECT_TRUE(j.at("primary").contains("f1"));
  EXPECT_TRUE(j.at("flipped").contains("confusion_matrix"));
}

TEST(WriteRocCsv, EmitsHeaderAndPoints) {
  const std::vector<std::pair<double, double>> points{{0.0, 0.0}, {0.5, 1.0}, {1.0, 1.0}};
  const auto path = testutil::temp_path("roc.csv");
  write_roc_csv(points, path);
  const std::string text = testutil::read_file(path);
  EXPECT_EQ(text, "FPR,TPR\n0,0\n0.5,1\n1,1\n");
}

}  // namespace
