#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace incidur {

// counts(i, j) = number of instances predicted as class i and observed as j.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  std::int64_t total() const { return counts.sum(); }
};

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> observed,
                          std::vector<std::string> labels);

struct ClassScores {
  std::vector<double> precision;
  std::vector<double> recall;
  // Set when the denominator was zero and the score was reported as 0.
  std::vector<bool> precision_undefined;
  std::vector<bool> recall_undefined;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double accuracy = 0.0;
};

ClassScores precision_recall_accuracy(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr;
  double tpr;
};

// One point per distinct score threshold, from (0,0) to (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
// Trapezoidal area under roc_curve, computed in integer pair counts so it
// equals the pairwise concordance with half credit for ties.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct MulticlassAuc {
  double macro = 0.0;
  std::vector<std::optional<double>> per_class;  // empty when the class was excluded
  bool excluded_any = false;
};

// Macro one-vs-rest AUC over the probability columns. Classes that are absent
// from the labels (or are the only class present) are excluded.
MulticlassAuc multiclass_auc(const Eigen::MatrixXd& probabilities, std::span<const int> labels);

struct RegressionMetrics {
  double mae = 0.0;
  double mape = 0.0;  // percent, over the non-zero observations
  double rmse = 0.0;
  std::size_t n = 0;
  std::size_t mape_excluded = 0;  // observations equal to zero
};

RegressionMetrics regression_metrics(std::span<const double> predicted, std::span<const double> observed);

}  // namespace incidur
