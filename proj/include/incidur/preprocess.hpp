#pragma once

// Imputation, correlation filtering, Box-Cox target transform, SMOTE and
// stratified splitting.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "incidur/binary_io.hpp"
#include "incidur/domain.hpp"

namespace incidur {

// Fill values learned on training data: column means for numeric columns,
// the modal category for one-hot groups and binary/ordinal columns.
class Imputer {
 public:
  static Imputer fit(const FeatureMatrix& train);
  FeatureMatrix apply(const FeatureMatrix& matrix) const;

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<double>& fill_values() const { return fill_; }
  // Source features whose one-hot groups are filled as a unit.
  const std::vector<std::string>& groups() const { return groups_; }

  void save(BinaryWriter& w) const;
  static Imputer load(BinaryReader& r);

 private:
  std::vector<std::string> columns_;
  std::vector<std::string> sources_;
  std::vector<double> fill_;
  std::vector<std::string> groups_;
};

FeatureMatrix impute(const FeatureMatrix& matrix);

struct CorrelationFilterResult {
  FeatureMatrix matrix;
  std::vector<std::string> dropped;
  std::vector<std::size_t> kept;  // indices into the input columns
};

// Scans column pairs (i < j) in schema order; whenever |r| > threshold
// between two surviving non-constant columns the later one is dropped.
CorrelationFilterResult correlation_filter(const FeatureMatrix& matrix, double threshold);

class BoxCoxTransform {
 public:
  BoxCoxTransform() = default;
  BoxCoxTransform(double lambda, double shift);

  double lambda() const { return lambda_; }
  double shift() const { return shift_; }

  double apply(double y) const;
  double inverse(double z) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& y) const;
  Eigen::VectorXd inverse(const Eigen::VectorXd& z) const;

  void save(BinaryWriter& w) const;
  static BoxCoxTransform load(BinaryReader& r);

 private:
  double lambda_ = 1.0;
  double shift_ = 0.0;
};

// Profile log-likelihood of the Box-Cox model at `lambda` for shifted data.
double boxcox_log_likelihood(const Eigen::VectorXd& y, double lambda);

// Grid search over lambda in [-2, 2] step 0.01; ties go to the lambda
// closest to zero.
BoxCoxTransform boxcox_fit(const Eigen::VectorXd& y, double shift = 0.0);

// Sample skewness m3 / m2^(3/2).
double skewness(const Eigen::VectorXd& x);

// Oversamples every class up to the majority count. `matrix.target` holds
// integer class labels. Output = original rows, then synthetic rows.
FeatureMatrix smote(const FeatureMatrix& matrix, int k, std::uint64_t seed);

struct SplitSpec {
  double train_fraction = 0.70;
  double test_fraction = 0.15;
  double validation_fraction = 0.15;
  std::uint64_t seed = 42;

  void validate() const;
};

// Stratified assignment of indices into groups with the given fractions.
// Every group receives at least one member of every non-empty stratum or the
// call fails.
std::vector<std::vector<std::size_t>> stratified_partition(std::span<const Band> labels,
                                                           std::span<const double> fractions, std::uint64_t seed);

struct SplitResult {
  std::vector<IncidentRecord> train;
  std::vector<IncidentRecord> test;
  std::vector<IncidentRecord> validation;
};

SplitResult split(std::span<const IncidentRecord> records, const SplitSpec& spec);

}  // namespace incidur
