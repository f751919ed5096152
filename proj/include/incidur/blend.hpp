#pragma once

// Single-holdout blending: bases are fit on the training part, a linear
// meta-learner is fit on their holdout predictions.

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "incidur/model.hpp"

namespace incidur {

struct BlendSpec {
  std::vector<std::string> base_ids;
  bool retrain_on_union = true;
};

// Applied to every base-model training set (e.g. SMOTE for classifiers).
using Resampler = std::function<std::pair<FeatureMatrix, Target>(const FeatureMatrix&, const Target&)>;

struct BlendedModel {
  Task task = Task::regression;
  int n_classes = 1;
  std::vector<std::string> features;
  std::vector<TrainedModel> bases;
  // Regression: one OLS model. Classification: one logistic model per class.
  std::vector<LinearModel> meta;

  int output_dim() const { return task == Task::classification ? n_classes : 1; }
  // Bases' outputs side by side; the meta-learner's input.
  Eigen::MatrixXd base_outputs(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd predict(const FeatureMatrix& matrix) const;

  void save(BinaryWriter& w) const;
  static BlendedModel load(BinaryReader& r);
};

std::vector<LinearModel> fit_meta(const Eigen::MatrixXd& base_outputs, const Target& target);
Eigen::MatrixXd apply_meta(const std::vector<LinearModel>& meta, Task task, const Eigen::MatrixXd& base_outputs);

BlendedModel blend_fit(const FeatureMatrix& train, const Target& y_train, const FeatureMatrix& holdout,
                       const Target& y_holdout, const BlendSpec& spec, const ModelParams& params,
                       const Resampler& resampler = {});

// Higher is better: macro AUC for classification, negated MAE for regression.
double blend_score(const Eigen::MatrixXd& predictions, const Target& target);

struct SweepEntry {
  std::string name;  // model id, or "top<k>"
  std::vector<std::string> members;
  double score = 0.0;
};

struct SweepResult {
  std::vector<SweepEntry> singles;  // ranked by holdout score
  std::vector<SweepEntry> blends;   // top-k for k = 2..min(5, candidates)
  SweepEntry best;                  // by evaluation score over singles and blends
};

// Ranks the candidates on the holdout, blends the top k, and scores every
// single and blend on the evaluation set.
SweepResult blend_sweep(const FeatureMatrix& train, const Target& y_train, const FeatureMatrix& holdout,
                        const Target& y_holdout, const FeatureMatrix& eval, const Target& y_eval,
                        const std::vector<std::string>& candidates, const ModelParams& params,
                        const Resampler& resampler = {});

}  // namespace incidur
