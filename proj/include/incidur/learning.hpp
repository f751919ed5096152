#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>

namespace incidur {

enum class Task : std::uint8_t { regression, classification };

// Supervised target: real values, or integer class labels 0..n_classes-1
// stored as doubles.
struct Target {
  Task task = Task::regression;
  Eigen::VectorXd values;
  int n_classes = 1;

  static Target regression(Eigen::VectorXd y) { return Target{Task::regression, std::move(y), 1}; }
  static Target classes(Eigen::VectorXd labels, int n_classes) {
    return Target{Task::classification, std::move(labels), n_classes};
  }

  Eigen::Index size() const { return values.size(); }
  // Width of a prediction row: class count or 1.
  int output_dim() const { return task == Task::classification ? n_classes : 1; }
};

inline std::string_view task_name(Task t) { return t == Task::classification ? "classification" : "regression"; }

// Throws InvalidArgument if labels are not integers in [0, n_classes) or the
// sizes disagree with `rows`.
void check_target(const Target& target, Eigen::Index rows);
// Throws InvalidArgument if the design matrix has NaN or infinite cells.
void check_finite(const Eigen::MatrixXd& x);

}  // namespace incidur
