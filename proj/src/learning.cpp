#include "incidur/learning.hpp"

#include <cmath>
#include <string>

#include "incidur/error.hpp"

namespace incidur {

void check_target(const Target& target, Eigen::Index rows) {
  if (target.values.size() != rows)
    throw InvalidArgument("target has " + std::to_string(target.values.size()) + " entries for " +
                          std::to_string(rows) + " rows");
  if (target.task == Task::regression) {
    if (!target.values.allFinite()) throw InvalidArgument("regression target has non-finite values");
    return;
  }
  if (target.n_classes < 2) throw InvalidArgument("classification needs at least two classes");
  for (Eigen::Index i = 0; i < target.values.size(); ++i) {
    const double v = target.values(i);
    if (!(v >= 0.0) || v >= target.n_classes || v != std::floor(v))
      throw InvalidArgument("class label " + std::to_string(v) + " outside 0.." + std::to_string(target.n_classes - 1));
  }
}

void check_finite(const Eigen::MatrixXd& x) {
  if (!x.allFinite()) throw InvalidArgument("design matrix contains missing or non-finite values");
}

}  // namespace incidur
