#pragma once

// A fitted learner of any family behind one interface, built by id.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "incidur/binary_io.hpp"
#include "incidur/domain.hpp"
#include "incidur/learning.hpp"
#include "incidur/linear.hpp"
#include "incidur/trees.hpp"

namespace incidur {

// One-vs-rest logistic regression; rows renormalised to sum to 1.
struct OvrLogistic {
  std::vector<LinearModel> per_class;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  static OvrLogistic fit(const Eigen::MatrixXd& x, const Target& target);
};

struct ModelParams {
  std::uint64_t seed = 0;
  ForestConfig forest;
  GbmConfig gbm;
  std::optional<double> huber_delta;
  TobitLimits tobit_limits;
};

// Ids: rf, extra_trees, gbm_leaf (LightGBM-like), gbm_level (XGBoost-like),
// gbm_ts (CatBoost-like), cart, ols, huber, tobit, logistic.
std::span<const std::string_view> model_ids();
bool supports(std::string_view id, Task task);

class TrainedModel {
 public:
  using Impl = std::variant<ForestModel, GbmModel, TreeModel, LinearModel, OvrLogistic>;

  TrainedModel() = default;
  TrainedModel(std::string id, Task task, int output_dim, std::vector<std::string> features, Impl impl);

  const std::string& id() const { return id_; }
  Task task() const { return task_; }
  int output_dim() const { return output_dim_; }
  const std::vector<std::string>& features() const { return features_; }
  const Impl& impl() const { return impl_; }

  // n x output_dim: class probabilities, or one column of values.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  // Checks the column names first.
  Eigen::MatrixXd predict(const FeatureMatrix& matrix) const;

  void save(BinaryWriter& w) const;
  static TrainedModel load(BinaryReader& r);

 private:
  std::string id_;
  Task task_ = Task::regression;
  int output_dim_ = 1;
  std::vector<std::string> features_;
  Impl impl_;
};

TrainedModel fit_model(std::string_view id, const FeatureMatrix& matrix, const Target& target,
                       const ModelParams& params);

// Column-name check shared by every predict entry point.
void check_columns(const std::vector<std::string>& expected, const std::vector<std::string>& actual);

}  // namespace incidur
