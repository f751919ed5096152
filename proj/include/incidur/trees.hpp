#pragma once

// CART trees, random forests / extra trees, and gradient-boosted trees.
//
// All learners share one grower working on presorted column orders. Node
// membership is kept as contiguous ranges of each column's order, so a split
// costs one stable partition per column and split search never re-sorts.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "incidur/binary_io.hpp"
#include "incidur/domain.hpp"
#include "incidur/learning.hpp"
#include "incidur/random.hpp"

namespace incidur {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // rows with x <= threshold go left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint64_t n_samples = 0;
  std::uint32_t value_offset = 0;

  bool is_leaf() const { return feature < 0; }
};

class TreeModel {
 public:
  TreeModel() = default;
  TreeModel(int value_dim, std::vector<TreeNode> nodes, std::vector<double> values);

  int value_dim() const { return value_dim_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::span<const double> node_value(std::size_t node) const;
  std::span<double> mutable_node_value(std::size_t node);
  std::size_t leaf_count() const;
  int depth() const;

  std::size_t leaf_of(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  // n x value_dim.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  // out.row(i) += scale * value(leaf_of(row i)).
  void accumulate(const Eigen::MatrixXd& x, double scale, Eigen::MatrixXd& out) const;

  void save(BinaryWriter& w) const;
  static TreeModel load(BinaryReader& r);

 private:
  int value_dim_ = 1;
  std::vector<TreeNode> nodes_;
  std::vector<double> values_;
};

// Row order of every column, ascending by value. Ties are broken by the
// optional tie key, then by row index, so the order depends only on the data.
struct SortedColumns {
  std::vector<std::vector<std::uint32_t>> order;

  static SortedColumns build(const Eigen::MatrixXd& x, const Eigen::VectorXd* tie_key = nullptr);
};

struct GrowConfig {
  int max_depth = 8;      // <= 0: unlimited
  int max_leaves = 0;     // <= 0: unlimited
  bool best_first = false;  // expand the highest-gain leaf first (leaf-wise)
  std::uint64_t min_samples_leaf = 1;
  int max_features = 0;   // candidate columns per node; <= 0: all
  bool random_thresholds = false;  // extra-trees style split points
};

struct GrowInput {
  const Eigen::MatrixXd& x;
  const SortedColumns& sorted;
  std::span<const std::uint32_t> weights;  // empty: every row weight 1
  Task task = Task::regression;
  std::span<const int> labels;    // classification
  int n_classes = 1;
  std::span<const double> targets;  // regression
};

struct GrowResult {
  TreeModel tree;
  std::vector<std::int32_t> row_leaf;  // node id per input row; -1 if weight 0
};

// Leaves hold class proportions (classification) or the weighted mean.
GrowResult grow_tree(const GrowInput& input, const GrowConfig& config, Rng& rng);

// ---------------------------------------------------------------------------
// Random forest / extra trees

enum class ForestMode : std::uint8_t { rf, extra_trees };

struct MaxFeatures {
  enum class Kind : std::uint8_t { all, fraction, sqrt } kind = Kind::all;
  double fraction = 1.0;

  static MaxFeatures all() { return {}; }
  static MaxFeatures sqrt() { return {Kind::sqrt, 0.0}; }
  static MaxFeatures of(double f) { return {Kind::fraction, f}; }
  // Number of candidate columns out of p; throws if that is zero.
  int resolve(Eigen::Index p) const;
};

struct ForestConfig {
  int n_estimators = 100;
  int max_depth = 8;  // <= 0: unlimited
  int min_samples_leaf = 5;
  MaxFeatures max_features = MaxFeatures::all();
  std::optional<bool> bootstrap;  // default: on for rf, off for extra trees
  std::uint64_t seed = 0;
  int n_threads = 1;

  void validate() const;
};

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(Task task, int n_classes, ForestMode mode, std::vector<std::string> features,
              std::vector<TreeModel> trees);

  Task task() const { return task_; }
  int n_classes() const { return n_classes_; }
  ForestMode mode() const { return mode_; }
  const std::vector<std::string>& features() const { return features_; }
  const std::vector<TreeModel>& trees() const { return trees_; }
  int output_dim() const { return task_ == Task::classification ? n_classes_ : 1; }

  // Mean of the trees' outputs.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;

  void save(BinaryWriter& w) const;
  static ForestModel load(BinaryReader& r);

 private:
  Task task_ = Task::regression;
  int n_classes_ = 1;
  ForestMode mode_ = ForestMode::rf;
  std::vector<std::string> features_;
  std::vector<TreeModel> trees_;
};

// Single exact CART tree (no bootstrap, every column a candidate). Gini for
// classification, squared error for regression.
TreeModel cart_fit(const FeatureMatrix& matrix, const Target& target, const ForestConfig& config);

ForestModel forest_fit(const FeatureMatrix& matrix, const Target& target, const ForestConfig& config,
                       ForestMode mode);

// ---------------------------------------------------------------------------
// Gradient boosting

enum class Growth : std::uint8_t { level_wise, leaf_wise };
enum class Loss : std::uint8_t { squared, logistic };
enum class CategoricalEncoding : std::uint8_t { onehot_passthrough, target_statistic };

struct GbmConfig {
  int n_rounds = 200;
  double learning_rate = 0.1;
  Growth growth = Growth::leaf_wise;
  int max_leaves = 31;
  int max_depth = 8;
  int min_samples_leaf = 5;
  Loss loss = Loss::squared;
  CategoricalEncoding categorical_encoding = CategoricalEncoding::onehot_passthrough;
  double prior_weight = 10.0;  // target-statistic smoothing
  std::uint64_t seed = 0;

  void validate() const;
};

// Replaces each one-hot group with one column holding the smoothed mean
// target of its category. Training rows use leave-one-out statistics.
class TargetStatisticEncoder {
 public:
  struct Group {
    std::string source;
    std::vector<std::size_t> columns;
    std::vector<double> sums;
    std::vector<double> counts;
  };

  static TargetStatisticEncoder fit(const FeatureMatrix& matrix, const Eigen::VectorXd& y, double prior_weight);
  bool empty() const { return groups_.empty(); }
  Eigen::MatrixXd transform_training(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const;
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;

  void save(BinaryWriter& w) const;
  static TargetStatisticEncoder load(BinaryReader& r);

 private:
  Eigen::MatrixXd transform_impl(const Eigen::MatrixXd& x, const Eigen::VectorXd* loo_y) const;
  int category_of(const Eigen::MatrixXd& x, Eigen::Index row, const Group& g) const;

  Eigen::Index input_cols_ = 0;
  std::vector<Group> groups_;
  std::vector<std::size_t> passthrough_;  // non-group columns, in order
  double prior_ = 0.0;
  double prior_weight_ = 10.0;
};

// One additive model on a single output: init + lr * sum(tree outputs).
class GbmBooster {
 public:
  GbmBooster() = default;
  GbmBooster(double init, double learning_rate, std::vector<TreeModel> trees, TargetStatisticEncoder encoder);

  double init() const { return init_; }
  const std::vector<TreeModel>& trees() const { return trees_; }
  Eigen::VectorXd raw_score(const Eigen::MatrixXd& x) const;

  void save(BinaryWriter& w) const;
  static GbmBooster load(BinaryReader& r);

 private:
  double init_ = 0.0;
  double learning_rate_ = 0.1;
  std::vector<TreeModel> trees_;
  TargetStatisticEncoder encoder_;
};

class GbmModel {
 public:
  GbmModel() = default;
  GbmModel(Task task, int n_classes, GbmConfig config, std::vector<std::string> features,
           std::vector<GbmBooster> boosters, std::vector<double> training_loss);

  Task task() const { return task_; }
  int n_classes() const { return n_classes_; }
  const GbmConfig& config() const { return config_; }
  const std::vector<std::string>& features() const { return features_; }
  const std::vector<GbmBooster>& boosters() const { return boosters_; }
  int output_dim() const { return task_ == Task::classification ? n_classes_ : 1; }
  // Training loss after each round (SSE for squared loss, summed log loss
  // over the one-vs-rest problems for logistic).
  const std::vector<double>& training_loss() const { return training_loss_; }

  // Regression: n x 1 values. Classification: one-vs-rest probabilities
  // renormalised per row.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;

  void save(BinaryWriter& w) const;
  static GbmModel load(BinaryReader& r);

 private:
  Task task_ = Task::regression;
  int n_classes_ = 1;
  GbmConfig config_;
  std::vector<std::string> features_;
  std::vector<GbmBooster> boosters_;
  std::vector<double> training_loss_;
};

GbmModel gbm_fit(const FeatureMatrix& matrix, const Target& target, const GbmConfig& config);

}  // namespace incidur
