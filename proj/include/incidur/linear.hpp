#pragma once

// Linear learners: OLS, logistic regression, Huber regression and the
// censored-Gaussian Tobit model.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "incidur/binary_io.hpp"
#include "incidur/domain.hpp"

namespace incidur {

enum class LinearFamily : std::uint8_t { ols, logistic, huber, tobit };

std::string_view family_name(LinearFamily f);

struct TobitLimits {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  void validate() const;
};

struct LinearModel {
  LinearFamily family = LinearFamily::ols;
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double sigma = 0.0;  // tobit
  double delta = 0.0;  // huber, final value
  TobitLimits limits;  // tobit
  std::vector<std::string> features;

  // Fit diagnostics; not persisted.
  int iterations = 0;
  bool separable = false;  // logistic: training classes are linearly separable
  std::vector<double> objective_trace;  // tobit negative log-likelihood per iteration

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const;
  // Probabilities for logistic, the linear predictor otherwise (tobit: the
  // latent mean).
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  // Tobit prediction clamped to the censoring limits.
  Eigen::VectorXd predict_observed(const Eigen::MatrixXd& x) const;

  void save(BinaryWriter& w) const;
  static LinearModel load(BinaryReader& r);
};

LinearModel ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
LinearModel ols_fit(const FeatureMatrix& matrix, const Eigen::VectorXd& y);

// labels are 0/1.
LinearModel logistic_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels);
LinearModel logistic_fit(const FeatureMatrix& matrix, const Eigen::VectorXd& labels);

// Without delta, uses 1.35 * MAD / 0.6745 of the current residuals,
// recomputed every iteration.
LinearModel huber_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::optional<double> delta = {});
LinearModel huber_fit(const FeatureMatrix& matrix, const Eigen::VectorXd& y, std::optional<double> delta = {});

LinearModel tobit_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TobitLimits& limits);
LinearModel tobit_fit(const FeatureMatrix& matrix, const Eigen::VectorXd& y, const TobitLimits& limits);

double huber_loss(double residual, double delta);

// Objectives on the raw design matrix, for gradient checks. theta is
// (weights..., intercept) and, for tobit, a trailing log sigma. They return
// the value to minimise and fill grad when it is non-null.
double logistic_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, const Eigen::VectorXd& theta,
                          Eigen::VectorXd* grad);
double huber_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta, double delta,
                       Eigen::VectorXd* grad);
double tobit_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                       const TobitLimits& limits, Eigen::VectorXd* grad);

// log of the standard normal CDF, accurate far into the lower tail.
double log_normal_cdf(double z);
// phi(z) / Phi(z).
double inverse_mills(double z);

}  // namespace incidur
