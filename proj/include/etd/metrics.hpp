#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "etd/dataset.hpp"

// Confusion matrix, precision/recall/F1/accuracy, and trapezoidal ROC AUC.
// The default orientation counts Normal as the positive class; reports carry
// the theft-as-positive numbers alongside, since that is the operationally
// interesting view for theft detection.

namespace etd {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  Label positive_class = Label::Normal;

  std::size_t total() const { return tp + fn + fp + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const Label> y_true, std::span<const Label> y_pred,
                                 Label positive_class) {
  if (y_true.size() != y_pred.size()) {
    throw std::invalid_argument("metrics: label vectors differ in length");
  }
  if (y_true.empty()) throw std::invalid_argument("metrics: no samples");
  ConfusionMatrix cm;
  cm.positive_class = positive_class;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool actual_pos = y_true[i] == positive_class;
    const bool pred_pos = y_pred[i] == positive_class;
    if (actual_pos && pred_pos) ++cm.tp;
    else if (actual_pos && !pred_pos) ++cm.fn;
    else if (!actual_pos && pred_pos) ++cm.fp;
    else ++cm.tn;
  }
  return cm;
}

struct Prfa {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

// Zero denominators yield zero, matching the convention for degenerate
// single-class predictions.
inline Prfa prf_accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("metrics: empty confusion matrix");
  Prfa out;
  const auto tp = static_cast<double>(cm.tp);
  if (cm.tp + cm.fp > 0) out.precision = tp / static_cast<double>(cm.tp + cm.fp);
  if (cm.tp + cm.fn > 0) out.recall = tp / static_cast<double>(cm.tp + cm.fn);
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  out.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  return out;
}

// ROC points (FPR, TPR) from (0,0) to (1,1), one step per distinct score.
// Tied scores collapse into a single diagonal segment, so the trapezoid area
// equals the Mann-Whitney statistic with ties counted 1/2.
inline std::vector<std::pair<double, double>> roc_curve(std::span<const double> scores,
                                                        std::span<const Label> y_true,
                                                        Label positive_class) {
  if (scores.size() != y_true.size()) {
    throw std::invalid_argument("metrics: scores/labels differ in length");
  }
  std::size_t pos = 0, neg = 0;
  for (const Label l : y_true) (l == positive_class ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("metrics: ROC needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::pair<double, double>> points;
  points.reserve(scores.size() + 2);
  points.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (y_true[order[i]] == positive_class ? tp : fp) += 1;
      ++i;
    }
    points.emplace_back(static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos));
  }
  return points;
}

inline double roc_auc(std::span<const double> scores, std::span<const Label> y_true,
                      Label positive_class) {
  const auto points = roc_curve(scores, y_true, positive_class);
  double auc = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    auc += (points[i].first - points[i - 1].first) * (points[i].second + points[i - 1].second) / 2.0;
  }
  return auc;
}

struct ClassMetrics {
  ConfusionMatrix matrix;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;
};

struct MetricsReport {
  Label positive_class = Label::Normal;
  ClassMetrics primary;  // metrics with positive_class as the positive label
  ClassMetrics flipped;  // the opposite orientation
};

namespace detail {

inline ClassMetrics class_metrics(std::span<const Label> y_true, std::span<const Label> y_pred,
                                  std::span<const double> theft_scores, Label positive_class) {
  ClassMetrics out;
  out.matrix = confusion(y_true, y_pred, positive_class);
  const Prfa prfa = prf_accuracy(out.matrix);
  out.precision = prfa.precision;
  out.recall = prfa.recall;
  out.f1 = prfa.f1;
  out.accuracy = prfa.accuracy;
  // Orient the score toward the requested positive class.
  if (positive_class == Label::Theft) {
    out.auc = roc_auc(theft_scores, y_true, positive_class);
  } else {
    std::vector<double> normal_scores(theft_scores.size());
    for (std::size_t i = 0; i < theft_scores.size(); ++i) normal_scores[i] = 1.0 - theft_scores[i];
    out.auc = roc_auc(normal_scores, y_true, positive_class);
  }
  return out;
}

}  // namespace detail

// theft_scores are P(theft) per sample; each orientation sees them flipped
// appropriately.
inline MetricsReport evaluate(std::span<const Label> y_true, std::span<const Label> y_pred,
                              std::span<const double> theft_scores,
                              Label positive_class = Label::Normal) {
  if (y_true.size() != theft_scores.size()) {
    throw std::invalid_argument("metrics: scores/labels differ in length");
  }
  MetricsReport report;
  report.positive_class = positive_class;
  const Label other = positive_class == Label::Normal ? Label::Theft : Label::Normal;
  report.primary = detail::class_metrics(y_true, y_pred, theft_scores, positive_class);
  report.flipped = detail::class_metrics(y_true, y_pred, theft_scores, other);
  return report;
}

inline std::string to_string(Label l) { return l == Label::Theft ? "theft" : "normal"; }

inline void to_json(nlohmann::json& j, const ConfusionMatrix& cm) {
  j = {{"tp", cm.tp},
       {"fn", cm.fn},
       {"fp", cm.fp},
       {"tn", cm.tn},
       {"positive_class", to_string(cm.positive_class)}};
}

inline void to_json(nlohmann::json& j, const ClassMetrics& m) {
  j = {{"confusion_matrix", m.matrix}, {"precision", m.precision}, {"recall", m.recall},
       {"f1", m.f1},                   {"accuracy", m.accuracy},   {"auc", m.auc}};
}

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"positive_class", to_string(r.positive_class)},
       {"primary", r.primary},
       {"flipped", r.flipped}};
}

// Two-column FPR,TPR listing for external plotting.
inline void write_roc_csv(std::span<const std::pair<double, double>> points,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("metrics: cannot write '" + path.string() + "'");
  out << "FPR,TPR\n";
  for (const auto& [fpr, tpr] : points) {
    out << etd::detail::format_double(fpr) << ',' << etd::detail::format_double(tpr) << '\n';
  }
  if (!out) throw std::runtime_error("metrics: write to '" + path.string() + "' failed");
}

}  // namespace etd
