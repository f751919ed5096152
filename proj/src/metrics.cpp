#include "incidur/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "incidur/error.hpp"

namespace incidur {

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> observed,
                          std::vector<std::string> labels) {
  if (predicted.size() != observed.size())
    throw InvalidArgument("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                          std::to_string(observed.size()) + " observations");
  if (predicted.empty()) throw InvalidArgument("confusion: no instances");
  const auto k = static_cast<Eigen::Index>(labels.size());
  ConfusionMatrix cm;
  cm.labels = std::move(labels);
  cm.counts.setZero(k, k);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] < 0 || predicted[i] >= k || observed[i] < 0 || observed[i] >= k)
      throw InvalidArgument("confusion: label outside 0.." + std::to_string(k - 1));
    ++cm.counts(predicted[i], observed[i]);
  }
  return cm;
}

ClassScores precision_recall_accuracy(const ConfusionMatrix& cm) {
  const Eigen::Index k = cm.counts.rows();
  if (k == 0 || cm.total() == 0) throw InvalidArgument("precision/recall: empty confusion matrix");
  ClassScores s;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.counts(c, c));
    const auto predicted = static_cast<double>(cm.counts.row(c).sum());
    const auto observed = static_cast<double>(cm.counts.col(c).sum());
    s.precision_undefined.push_back(predicted == 0.0);
    s.recall_undefined.push_back(observed == 0.0);
    s.precision.push_back(predicted == 0.0 ? 0.0 : tp / predicted);
    s.recall.push_back(observed == 0.0 ? 0.0 : tp / observed);
  }
  s.macro_precision = std::accumulate(s.precision.begin(), s.precision.end(), 0.0) / static_cast<double>(k);
  s.macro_recall = std::accumulate(s.recall.begin(), s.recall.end(), 0.0) / static_cast<double>(k);
  s.accuracy = static_cast<double>(cm.counts.trace()) / static_cast<double>(cm.total());
  return s;
}

namespace {

struct Group {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
};

// Distinct-score groups in descending score order.
std::vector<Group> threshold_groups(std::span<const double> scores, std::span<const int> labels, std::uint64_t& p,
                                    std::uint64_t& n) {
  if (scores.size() != labels.size())
    throw InvalidArgument("roc: " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) +
                          " labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (double s : scores)
    if (std::isnan(s)) throw InvalidArgument("roc: NaN score");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<Group> groups;
  p = n = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int y = labels[order[i]];
    if (y != 0 && y != 1) throw InvalidArgument("roc: labels must be 0 or 1");
    if (i == 0 || scores[order[i]] != scores[order[i - 1]]) groups.emplace_back();
    (y == 1 ? groups.back().pos : groups.back().neg) += 1;
    (y == 1 ? p : n) += 1;
  }
  if (p == 0 || n == 0) throw InvalidArgument("roc: both classes must be present");
  return groups;
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  std::uint64_t p = 0;
  std::uint64_t n = 0;
  const auto groups = threshold_groups(scores, labels, p, n);
  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (const auto& g : groups) {
    tp += g.pos;
    fp += g.neg;
    pts.push_back({static_cast<double>(fp) / static_cast<double>(n), static_cast<double>(tp) / static_cast<double>(p)});
  }
  return pts;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  std::uint64_t p = 0;
  std::uint64_t n = 0;
  const auto groups = threshold_groups(scores, labels, p, n);
  // Twice the trapezoid area in pair units: each group adds
  // neg * (2 * tp_before + pos).
  std::uint64_t twice = 0;
  std::uint64_t tp = 0;
  for (const auto& g : groups) {
    twice += g.neg * (2 * tp + g.pos);
    tp += g.pos;
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(p) * static_cast<double>(n));
}

MulticlassAuc multiclass_auc(const Eigen::MatrixXd& probabilities, std::span<const int> labels) {
  if (static_cast<std::size_t>(probabilities.rows()) != labels.size())
    throw InvalidArgument("multiclass auc: row count does not match labels");
  const Eigen::Index k = probabilities.cols();
  MulticlassAuc out;
  std::vector<int> binary(labels.size());
  double sum = 0.0;
  int used = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      binary[i] = labels[i] == c ? 1 : 0;
      positives += static_cast<std::size_t>(binary[i]);
    }
    if (positives == 0 || positives == labels.size()) {
      out.per_class.emplace_back();
      out.excluded_any = true;
      continue;
    }
    std::vector<double> col(probabilities.col(c).data(), probabilities.col(c).data() + probabilities.rows());
    const double a = roc_auc(col, binary);
    out.per_class.emplace_back(a);
    sum += a;
    ++used;
  }
  if (used == 0) throw InvalidArgument("multiclass auc: need at least two classes present");
  out.macro = sum / used;
  return out;
}

RegressionMetrics regression_metrics(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size())
    throw InvalidArgument("regression metrics: " + std::to_string(predicted.size()) + " predictions for " +
                          std::to_string(observed.size()) + " observations");
  if (predicted.empty()) throw InvalidArgument("regression metrics: no instances");
  RegressionMetrics m;
  m.n = predicted.size();
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double pct_sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double e = predicted[i] - observed[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (observed[i] == 0.0) {
      ++m.mape_excluded;
    } else {
      pct_sum += std::abs(e) / std::abs(observed[i]);
    }
  }
  const auto n = static_cast<double>(m.n);
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  const std::size_t kept = m.n - m.mape_excluded;
  m.mape = kept == 0 ? 0.0 : 100.0 * pct_sum / static_cast<double>(kept);
  return m;
}

}  // namespace incidur
