#include "incidur/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "incidur/error.hpp"
#include "incidur/learning.hpp"

namespace incidur {

std::string_view family_name(LinearFamily f) {
  switch (f) {
    case LinearFamily::ols:
      return "ols";
    case LinearFamily::logistic:
      return "logistic";
    case LinearFamily::huber:
      return "huber";
    case LinearFamily::tobit:
      return "tobit";
  }
  return "?";
}

void TobitLimits::validate() const {
  if (std::isnan(lower) || std::isnan(upper) || !(lower < upper))
    throw InvalidArgument("tobit limits need lower < upper");
}

Eigen::VectorXd LinearModel::linear_predictor(const Eigen::MatrixXd& x) const {
  if (x.cols() != weights.size())
    throw SchemaMismatch("linear model expects " + std::to_string(weights.size()) + " columns, got " +
                         std::to_string(x.cols()));
  return ((x * weights).array() + intercept).matrix();
}

Eigen::VectorXd LinearModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd eta = linear_predictor(x);
  if (family == LinearFamily::logistic) return (1.0 / (1.0 + (-eta.array()).exp())).matrix();
  return eta;
}

Eigen::VectorXd LinearModel::predict_observed(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out = predict(x);
  if (family == LinearFamily::tobit) out = out.cwiseMax(limits.lower).cwiseMin(limits.upper);
  return out;
}

void LinearModel::save(BinaryWriter& w) const {
  w.u8(static_cast<std::uint8_t>(family));
  w.vec(weights);
  w.f64(intercept);
  w.f64(sigma);
  w.f64(delta);
  w.f64(limits.lower);
  w.f64(limits.upper);
  w.strs(features);
}

LinearModel LinearModel::load(BinaryReader& r) {
  LinearModel m;
  const auto fam = r.u8();
  if (fam > static_cast<std::uint8_t>(LinearFamily::tobit)) throw ArtifactError("unknown linear model family");
  m.family = static_cast<LinearFamily>(fam);
  m.weights = r.vec();
  m.intercept = r.f64();
  m.sigma = r.f64();
  m.delta = r.f64();
  m.limits.lower = r.f64();
  m.limits.upper = r.f64();
  m.features = r.strs();
  if (m.family == LinearFamily::tobit && !(m.sigma > 0.0)) throw ArtifactError("tobit model with sigma <= 0");
  return m;
}

namespace {

constexpr double kRcondFloor = 1e-10;

// Solves a symmetric positive semi-definite system; when it is near-singular,
// adds 1e-8 * trace / p to the diagonal.
Eigen::VectorXd solve_psd(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs) {
  const Eigen::Index p = a.rows();
  if (p == 0) return Eigen::VectorXd(0);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  // rcond() misses exact singularity, so the pivots are checked as well.
  const Eigen::VectorXd d = ldlt.vectorD();
  if (ldlt.info() == Eigen::Success && d.minCoeff() > kRcondFloor * d.cwiseAbs().maxCoeff() &&
      ldlt.rcond() >= kRcondFloor)
    return ldlt.solve(rhs);
  const double tr = a.trace();
  if (!(tr > 0.0)) return Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd reg = a;
  reg.diagonal().array() += 1e-8 * tr / static_cast<double>(p);
  return Eigen::LDLT<Eigen::MatrixXd>(reg).solve(rhs);
}

// Weighted least squares with an unpenalised intercept; returns
// (coefficients..., intercept).
Eigen::VectorXd weighted_ls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::Index p = x.cols();
  const double total = w.sum();
  const Eigen::RowVectorXd xbar = (w.transpose() * x) / total;
  const double ybar = w.dot(y) / total;
  const Eigen::MatrixXd xc = x.rowwise() - xbar;
  const Eigen::MatrixXd xw = w.asDiagonal() * xc;
  const Eigen::VectorXd beta = solve_psd(xc.transpose() * xw, xw.transpose() * (y.array() - ybar).matrix());
  Eigen::VectorXd theta(p + 1);
  theta.head(p) = beta;
  theta(p) = ybar - xbar.dot(beta);
  return theta;
}

struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    const auto n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean).array().square().colwise().sum() / n).sqrt().matrix();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
      if (!(s.scale(j) > 0.0)) s.scale(j) = 1.0;
    return s;
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }
  // (beta..., beta0) on the standardised scale -> weights and intercept.
  void to_original(const Eigen::VectorXd& theta, LinearModel& m) const {
    const Eigen::Index p = mean.size();
    m.weights = (theta.head(p).array() / scale.transpose().array()).matrix();
    m.intercept = theta(p) - mean.dot(m.weights);
  }
};

void check_inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool need_overdetermined) {
  check_finite(x);
  if (y.size() != x.rows())
    throw InvalidArgument("target has " + std::to_string(y.size()) + " entries for " + std::to_string(x.rows()) +
                          " rows");
  if (!y.allFinite()) throw InvalidArgument("target has non-finite values");
  if (x.rows() == 0) throw InvalidArgument("cannot fit on zero rows");
  if (need_overdetermined && x.rows() <= x.cols())
    throw InvalidArgument("need more rows than columns (" + std::to_string(x.rows()) + " <= " +
                          std::to_string(x.cols()) + ")");
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.leftCols(x.cols()) = x;
  a.col(x.cols()).setOnes();
  return a;
}

double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

double robust_delta(const Eigen::VectorXd& r) {
  std::vector<double> v(r.data(), r.data() + r.size());
  const double med = median_of(v);
  for (auto& e : v) e = std::abs(e - med);
  return std::max(1.35 * median_of(v) / 0.6745, 1e-12);
}

template <class F>
LinearModel finish(LinearFamily fam, const Standardizer& st, const Eigen::VectorXd& theta, F&& extra) {
  LinearModel m;
  m.family = fam;
  st.to_original(theta, m);
  extra(m);
  return m;
}

}  // namespace

double huber_loss(double residual, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("huber delta must be positive");
  const double a = std::abs(residual);
  return a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta);
}

double log_normal_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
  if (z > -30.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  // Asymptotic expansion of the Gaussian tail.
  const double z2 = z * z;
  const double series = -1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log1p(series);
}

double inverse_mills(double z) {
  if (z > -30.0) {
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return pdf / (0.5 * std::erfc(-z / std::numbers::sqrt2));
  }
  const double z2 = z * z;
  return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

double logistic_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, const Eigen::VectorXd& theta,
                          Eigen::VectorXd* grad) {
  const Eigen::Index p = x.cols();
  if (theta.size() != p + 1) throw InvalidArgument("logistic theta has the wrong length");
  const Eigen::VectorXd eta = ((x * theta.head(p)).array() + theta(p)).matrix();
  double nll = 0.0;
  Eigen::VectorXd resid(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = (2.0 * labels(i) - 1.0) * eta(i);
    nll += softplus(-m);
    resid(i) = 1.0 / (1.0 + std::exp(-eta(i))) - labels(i);
  }
  if (grad) {
    grad->resize(p + 1);
    grad->head(p) = x.transpose() * resid;
    (*grad)(p) = resid.sum();
  }
  return nll;
}

double huber_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta, double delta,
                       Eigen::VectorXd* grad) {
  const Eigen::Index p = x.cols();
  if (theta.size() != p + 1) throw InvalidArgument("huber theta has the wrong length");
  const Eigen::VectorXd r = y - ((x * theta.head(p)).array() + theta(p)).matrix();
  double total = 0.0;
  Eigen::VectorXd psi(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    total += huber_loss(r(i), delta);
    psi(i) = std::clamp(r(i), -delta, delta);
  }
  if (grad) {
    grad->resize(p + 1);
    grad->head(p) = -(x.transpose() * psi);
    (*grad)(p) = -psi.sum();
  }
  return total;
}

double tobit_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                       const TobitLimits& limits, Eigen::VectorXd* grad) {
  const Eigen::Index p = x.cols();
  if (theta.size() != p + 2) throw InvalidArgument("tobit theta has the wrong length");
  const double log_sigma = theta(p + 1);
  const double sigma = std::exp(log_sigma);
  const Eigen::VectorXd mu = ((x * theta.head(p)).array() + theta(p)).matrix();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double nll = 0.0;
  Eigen::VectorXd d_mu(x.rows());  // d nll / d mu_i
  double d_log_sigma = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (y(i) <= limits.lower) {
      const double c = (limits.lower - mu(i)) / sigma;
      const double lam = inverse_mills(c);
      nll -= log_normal_cdf(c);
      d_mu(i) = lam / sigma;
      d_log_sigma += lam * c;
    } else if (y(i) >= limits.upper) {
      const double c = (mu(i) - limits.upper) / sigma;
      const double lam = inverse_mills(c);
      nll -= log_normal_cdf(c);
      d_mu(i) = -lam / sigma;
      d_log_sigma += lam * c;
    } else {
      const double z = (y(i) - mu(i)) / sigma;
      nll += 0.5 * z * z + half_log_2pi + log_sigma;
      d_mu(i) = -z / sigma;
      d_log_sigma += 1.0 - z * z;
    }
  }
  if (grad) {
    grad->resize(p + 2);
    grad->head(p) = x.transpose() * d_mu;
    (*grad)(p) = d_mu.sum();
    (*grad)(p + 1) = d_log_sigma;
  }
  return nll;
}

// ---------------------------------------------------------------------------

LinearModel ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  check_inputs(x, y, true);
  const Eigen::VectorXd theta = weighted_ls(x, y, Eigen::VectorXd::Ones(x.rows()));
  LinearModel m;
  m.family = LinearFamily::ols;
  m.weights = theta.head(x.cols());
  m.intercept = theta(x.cols());
  return m;
}

LinearModel logistic_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels) {
  check_inputs(x, labels, false);
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) != 0.0 && labels(i) != 1.0) throw InvalidArgument("logistic labels must be 0 or 1");
  const double rate = labels.mean();
  if (rate == 0.0 || rate == 1.0) throw InvalidArgument("logistic regression needs both classes present");

  const Standardizer st = Standardizer::fit(x);
  const Eigen::MatrixXd z = st.apply(x);
  const Eigen::MatrixXd za = with_intercept(z);
  const Eigen::Index p = x.cols();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  theta(p) = std::log(rate / (1.0 - rate));

  constexpr int kMaxIter = 100;
  bool converged = false;
  int it = 0;
  Eigen::VectorXd g;
  double f = logistic_objective(z, labels, theta, &g);
  for (; it < kMaxIter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < 1e-8) {
      converged = true;
      break;
    }
    const Eigen::VectorXd eta = za * theta;
    const Eigen::VectorXd h = eta.unaryExpr([](double e) {
      const double q = 1.0 / (1.0 + std::exp(-e));
      return q * (1.0 - q);
    });
    const Eigen::MatrixXd hess = za.transpose() * (h.asDiagonal() * za);
    Eigen::VectorXd step = solve_psd(hess, g);
    double slope = g.dot(step);
    if (!(slope > 0.0)) {
      step = g;
      slope = g.squaredNorm();
    }
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      Eigen::VectorXd gn;
      const Eigen::VectorXd cand = theta - t * step;
      const double fn = logistic_objective(z, labels, cand, &gn);
      if (fn <= f - 1e-4 * t * slope) {
        theta = cand;
        f = fn;
        g = gn;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (!converged && g.lpNorm<Eigen::Infinity>() < 1e-8) converged = true;
  // A fit that orders every pair of classes strictly means the data are
  // separable: the gradient only vanishes because the weights ran off.
  const Eigen::VectorXd eta = za * theta;
  bool separates = true;
  for (Eigen::Index i = 0; i < eta.size() && separates; ++i)
    separates = (labels(i) == 1.0 ? eta(i) : -eta(i)) > 0.0;
  return finish(LinearFamily::logistic, st, theta, [&](LinearModel& m) {
    m.iterations = it;
    m.separable = !converged || separates;
  });
}

LinearModel huber_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::optional<double> delta) {
  check_inputs(x, y, true);
  if (delta && !(*delta > 0.0)) throw InvalidArgument("huber delta must be positive");
  const Standardizer st = Standardizer::fit(x);
  const Eigen::MatrixXd z = st.apply(x);
  const Eigen::MatrixXd za = with_intercept(z);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(x.rows());
  Eigen::VectorXd theta = weighted_ls(z, y, w);
  double d = 0.0;
  constexpr int kMaxIter = 200;
  for (int it = 1; it <= kMaxIter; ++it) {
    const Eigen::VectorXd r = y - za * theta;
    d = delta ? *delta : robust_delta(r);
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const double a = std::abs(r(i));
      w(i) = a <= d ? 1.0 : d / a;
    }
    const Eigen::VectorXd next = weighted_ls(z, y, w);
    const double change = (next - theta).lpNorm<Eigen::Infinity>();
    theta = next;
    if (change < 1e-8) {
      return finish(LinearFamily::huber, st, theta, [&](LinearModel& m) {
        m.delta = d;
        m.iterations = it;
      });
    }
  }
  LinearModel last = finish(LinearFamily::huber, st, theta, [&](LinearModel& m) { m.delta = d; });
  std::string coef;
  for (Eigen::Index j = 0; j < last.weights.size() && j < 5; ++j) coef += " " + std::to_string(last.weights(j));
  throw ConvergenceError("huber regression did not converge in 200 iterations; last intercept " +
                         std::to_string(last.intercept) + ", leading weights" + coef);
}

namespace {

// Hessian of tobit_objective with respect to (w, b, log sigma).
Eigen::MatrixXd tobit_hessian(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                              const TobitLimits& limits) {
  const Eigen::Index p = x.cols();
  const double sigma = std::exp(theta(p + 1));
  const Eigen::VectorXd mu = ((x * theta.head(p)).array() + theta(p)).matrix();
  Eigen::VectorXd a(x.rows());  // d2 / d mu2
  Eigen::VectorXd m(x.rows());  // d2 / d mu d log sigma
  double q = 0.0;               // d2 / d log sigma2
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const bool lower = y(i) <= limits.lower;
    if (lower || y(i) >= limits.upper) {
      const double c = lower ? (limits.lower - mu(i)) / sigma : (mu(i) - limits.upper) / sigma;
      const double lam = inverse_mills(c);
      const double k = lam * (c + lam);
      a(i) = k / (sigma * sigma);
      m(i) = (lower ? 1.0 : -1.0) * (k * c - lam) / sigma;
      q += c * (k * c - lam);
    } else {
      const double zi = (y(i) - mu(i)) / sigma;
      a(i) = 1.0 / (sigma * sigma);
      m(i) = 2.0 * zi / sigma;
      q += 2.0 * zi * zi;
    }
  }
  Eigen::MatrixXd h(p + 2, p + 2);
  const Eigen::MatrixXd xa = a.asDiagonal() * x;
  h.topLeftCorner(p, p) = x.transpose() * xa;
  h.block(0, p, p, 1) = xa.colwise().sum().transpose();
  h(p, p) = a.sum();
  h.block(0, p + 1, p, 1) = x.transpose() * m;
  h(p, p + 1) = m.sum();
  h.row(p).head(p) = h.col(p).head(p).transpose();
  h.row(p + 1).head(p + 1) = h.col(p + 1).head(p + 1).transpose();
  h(p + 1, p + 1) = q;
  return h;
}

}  // namespace

LinearModel tobit_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TobitLimits& limits) {
  check_inputs(x, y, true);
  limits.validate();
  Eigen::Index n_lower = 0;
  Eigen::Index n_upper = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) <= limits.lower) ++n_lower;
    else if (y(i) >= limits.upper) ++n_upper;
  }
  if (n_lower + n_upper == y.size())
    throw InvalidArgument("tobit needs at least one uncensored observation; sigma is unidentifiable");

  const Standardizer st = Standardizer::fit(x);
  const Eigen::MatrixXd z = st.apply(x);
  const Eigen::Index p = x.cols();
  Eigen::VectorXd theta(p + 2);
  {
    const Eigen::VectorXd ls = weighted_ls(z, y, Eigen::VectorXd::Ones(x.rows()));
    theta.head(p + 1) = ls;
    const Eigen::VectorXd r = y - with_intercept(z) * ls;
    const double s = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
    const double floor = 1e-6 * (1.0 + y.cwiseAbs().maxCoeff());
    theta(p + 1) = std::log(std::max(s, floor));
  }

  Eigen::VectorXd g;
  double f = tobit_objective(z, y, theta, limits, &g);
  std::vector<double> trace{f};
  constexpr int kMaxIter = 500;
  int it = 0;
  bool converged = false;
  for (; it < kMaxIter; ++it) {
    // Newton step in the Hessian eigenbasis. Directions with negligible
    // curvature (collinear columns) are unidentifiable: they are left out of
    // both the step and the convergence test. Negative curvature is flipped
    // so the step is always a descent direction.
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(tobit_hessian(z, y, theta, limits));
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const double floor = 1e-10 * std::max(1.0, lam.cwiseAbs().maxCoeff());
    const Eigen::VectorXd proj = eig.eigenvectors().transpose() * g;
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(lam.size());
    Eigen::VectorXd kept = Eigen::VectorXd::Zero(lam.size());
    for (Eigen::Index k = 0; k < lam.size(); ++k)
      if (std::abs(lam(k)) > floor) {
        coef(k) = -proj(k) / std::abs(lam(k));
        kept(k) = proj(k);
      }
    if ((eig.eigenvectors() * kept).lpNorm<Eigen::Infinity>() < 1e-6) {
      converged = true;
      break;
    }
    Eigen::VectorXd dir = eig.eigenvectors() * coef;
    if (!dir.allFinite() || !(g.dot(dir) < 0.0)) dir = -g;
    const double slope = g.dot(dir);
    // Newton decrement below what the objective can resolve.
    if (-slope < 1e-13 * (1.0 + std::abs(f))) {
      converged = true;
      break;
    }
    double t = 1.0;
    bool moved = false;
    Eigen::VectorXd cand;
    Eigen::VectorXd gn;
    double fn = f;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      cand = theta + t * dir;
      fn = tobit_objective(z, y, cand, limits, &gn);
      if (std::isfinite(fn) && fn <= f + 1e-4 * t * slope) {
        moved = true;
        break;
      }
    }
    if (!moved) {
      break;
    }
    theta = cand;
    f = fn;
    g = gn;
    trace.push_back(f);
  }
  if (!converged)
    throw ConvergenceError("tobit optimisation stopped after " + std::to_string(it) +
                           " iterations with gradient max-norm " + std::to_string(g.lpNorm<Eigen::Infinity>()));
  return finish(LinearFamily::tobit, st, theta.head(p + 1), [&](LinearModel& m) {
    m.sigma = std::exp(theta(p + 1));
    m.limits = limits;
    m.iterations = it;
    m.objective_trace = std::move(trace);
  });
}

LinearModel ols_fit(const FeatureMatrix& matrix, const Eigen::VectorXd& y) {
  LinearModel m = ols_fit(matrix.values, y);
  m.features = matrix.column_names();
  return m;
}

LinearModel logistic_fit(const FeatureMatrix& matrix, const Eigen::VectorXd& labels) {
  LinearModel m = logistic_fit(matrix.values, labels);
  m.features = matrix.column_names();
  return m;
}

LinearModel huber_fit(const FeatureMatrix& matrix, const Eigen::VectorXd& y, std::optional<double> delta) {
  LinearModel m = huber_fit(matrix.values, y, delta);
  m.features = matrix.column_names();
  return m;
}

LinearModel tobit_fit(const FeatureMatrix& matrix, const Eigen::VectorXd& y, const TobitLimits& limits) {
  LinearModel m = tobit_fit(matrix.values, y, limits);
  m.features = matrix.column_names();
  return m;
}

}  // namespace incidur
