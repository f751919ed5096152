#include "incidur/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "incidur/error.hpp"
#include "incidur/random.hpp"

namespace incidur {

// ---------------------------------------------------------------------------
// Imputation

Imputer Imputer::fit(const FeatureMatrix& train) {
  Imputer imp;
  imp.columns_ = train.column_names();
  imp.fill_.assign(train.columns.size(), 0.0);
  for (const auto& c : train.columns) imp.sources_.push_back(c.source);
  const Eigen::Index n = train.rows();

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < train.columns.size(); ++j) {
    const Column& col = train.columns[j];
    const auto x = train.values.col(static_cast<Eigen::Index>(j));
    if (col.kind == ColumnKind::onehot) {
      groups[col.source].push_back(j);
      continue;
    }
    std::size_t observed = 0;
    if (col.kind == ColumnKind::numeric) {
      double sum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isnan(x(i))) continue;
        sum += x(i);
        ++observed;
      }
      if (observed == 0) throw PreprocessError("column '" + col.name + "' has no observed values to impute from");
      imp.fill_[j] = sum / static_cast<double>(observed);
    } else {
      std::map<double, std::size_t> counts;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!std::isnan(x(i))) ++counts[x(i)];
      if (counts.empty()) throw PreprocessError("column '" + col.name + "' has no observed values to impute from");
      // Highest count wins; ties go to the smallest value.
      auto best = counts.begin();
      for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
      imp.fill_[j] = best->first;
    }
  }
  for (const auto& [source, cols] : groups) {
    std::vector<std::size_t> ones(cols.size(), 0);
    bool any = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const double v = train.values(i, static_cast<Eigen::Index>(cols[k]));
        if (std::isnan(v)) break;
        any = true;
        if (v == 1.0) ++ones[k];
      }
    }
    if (!any) throw PreprocessError("one-hot group '" + source + "' has no observed values to impute from");
    const std::size_t mode = static_cast<std::size_t>(std::max_element(ones.begin(), ones.end()) - ones.begin());
    for (std::size_t k = 0; k < cols.size(); ++k) imp.fill_[cols[k]] = (k == mode) ? 1.0 : 0.0;
    imp.groups_.push_back(source);
  }
  return imp;
}

FeatureMatrix Imputer::apply(const FeatureMatrix& matrix) const {
  check_schema(columns_, matrix.column_names());
  FeatureMatrix out = matrix;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      double& v = out.values(i, static_cast<Eigen::Index>(j));
      if (!std::isnan(v)) continue;
      if (out.columns[j].kind == ColumnKind::onehot) {
        // Fill the whole group so it stays a valid indicator vector.
        for (std::size_t k = 0; k < columns_.size(); ++k)
          if (sources_[k] == sources_[j] && out.columns[k].kind == ColumnKind::onehot)
            out.values(i, static_cast<Eigen::Index>(k)) = fill_[k];
      } else {
        v = fill_[j];
      }
    }
  }
  return out;
}

void Imputer::save(BinaryWriter& w) const {
  w.strs(columns_);
  w.strs(sources_);
  w.f64s(fill_);
  w.strs(groups_);
}

Imputer Imputer::load(BinaryReader& r) {
  Imputer imp;
  imp.columns_ = r.strs();
  imp.sources_ = r.strs();
  imp.fill_ = r.f64s();
  imp.groups_ = r.strs();
  if (imp.sources_.size() != imp.columns_.size() || imp.fill_.size() != imp.columns_.size())
    throw ArtifactError("imputer section malformed");
  return imp;
}

FeatureMatrix impute(const FeatureMatrix& matrix) { return Imputer::fit(matrix).apply(matrix); }

// ---------------------------------------------------------------------------
// Correlation filter

CorrelationFilterResult correlation_filter(const FeatureMatrix& matrix, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidArgument("correlation threshold must be in (0, 1]");
  if (matrix.rows() < 2) throw InvalidArgument("correlation filter needs at least two rows");
  const Eigen::Index p = matrix.cols();
  Eigen::MatrixXd centered = matrix.values.rowwise() - matrix.values.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm();
  std::vector<bool> constant(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto col = matrix.values.col(j);
    constant[static_cast<std::size_t>(j)] = (col.array() == col(0)).all() || norms(j) == 0.0;
  }

  std::vector<bool> dropped(static_cast<std::size_t>(p), false);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (dropped[static_cast<std::size_t>(i)] || constant[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = i + 1; j < p; ++j) {
      if (dropped[static_cast<std::size_t>(j)] || constant[static_cast<std::size_t>(j)]) continue;
      const double r = centered.col(i).dot(centered.col(j)) / (norms(i) * norms(j));
      if (std::abs(r) > threshold) dropped[static_cast<std::size_t>(j)] = true;
    }
  }

  CorrelationFilterResult out;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (dropped[static_cast<std::size_t>(j)]) {
      out.dropped.push_back(matrix.columns[static_cast<std::size_t>(j)].name);
    } else {
      out.kept.push_back(static_cast<std::size_t>(j));
    }
  }
  out.matrix = matrix.select_columns(out.kept);
  return out;
}

// ---------------------------------------------------------------------------
// Box-Cox

BoxCoxTransform::BoxCoxTransform(double lambda, double shift) : lambda_(lambda), shift_(shift) {
  if (!std::isfinite(lambda) || !(shift >= 0.0)) throw InvalidArgument("invalid Box-Cox parameters");
}

double BoxCoxTransform::apply(double y) const {
  const double x = y + shift_;
  if (!(x > 0.0)) throw InvalidArgument("Box-Cox input must be positive after shift");
  if (lambda_ == 0.0) return std::log(x);
  return std::expm1(lambda_ * std::log(x)) / lambda_;
}

double BoxCoxTransform::inverse(double z) const {
  if (lambda_ == 0.0) return std::exp(z) - shift_;
  const double base = lambda_ * z + 1.0;
  if (base <= 0.0) {
    // Outside the image of the forward map: the limit is 0 for positive
    // lambda and +inf for negative lambda.
    return (lambda_ > 0.0 ? 0.0 : std::numeric_limits<double>::infinity()) - shift_;
  }
  return std::exp(std::log1p(lambda_ * z) / lambda_) - shift_;
}

Eigen::VectorXd BoxCoxTransform::apply(const Eigen::VectorXd& y) const {
  Eigen::VectorXd z(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) z(i) = apply(y(i));
  return z;
}

Eigen::VectorXd BoxCoxTransform::inverse(const Eigen::VectorXd& z) const {
  Eigen::VectorXd y(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) y(i) = inverse(z(i));
  return y;
}

void BoxCoxTransform::save(BinaryWriter& w) const {
  w.f64(lambda_);
  w.f64(shift_);
}

BoxCoxTransform BoxCoxTransform::load(BinaryReader& r) {
  const double lambda = r.f64();
  const double shift = r.f64();
  return BoxCoxTransform(lambda, shift);
}

double boxcox_log_likelihood(const Eigen::VectorXd& y, double lambda) {
  const auto n = static_cast<double>(y.size());
  const Eigen::ArrayXd logy = y.array().log();
  Eigen::ArrayXd z;
  if (lambda == 0.0) {
    z = logy;
  } else {
    z = (lambda * logy).unaryExpr([](double v) { return std::expm1(v); }) / lambda;
  }
  const double mean = z.mean();
  const double var = (z - mean).square().sum() / n;
  if (!(var > 0.0)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * logy.sum();
}

BoxCoxTransform boxcox_fit(const Eigen::VectorXd& y, double shift) {
  if (y.size() < 2) throw InvalidArgument("Box-Cox fit needs at least two values");
  if (!(shift >= 0.0)) throw InvalidArgument("Box-Cox shift must be non-negative");
  const Eigen::VectorXd shifted = y.array() + shift;
  if ((shifted.array() <= 0.0).any()) throw InvalidArgument("Box-Cox fit requires positive values after shift");
  double best_lambda = 0.0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = -200; i <= 200; ++i) {
    const double lambda = i / 100.0;
    const double ll = boxcox_log_likelihood(shifted, lambda);
    if (ll > best_ll || (ll == best_ll && std::abs(lambda) < std::abs(best_lambda))) {
      best_ll = ll;
      best_lambda = lambda;
    }
  }
  return BoxCoxTransform(best_lambda, shift);
}

double skewness(const Eigen::VectorXd& x) {
  const double mean = x.mean();
  const Eigen::ArrayXd d = x.array() - mean;
  const double m2 = d.square().mean();
  const double m3 = d.cube().mean();
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

// ---------------------------------------------------------------------------
// SMOTE

FeatureMatrix smote(const FeatureMatrix& matrix, int k, std::uint64_t seed) {
  if (!matrix.target) throw InvalidArgument("SMOTE needs class labels in the matrix target");
  if (k < 1) throw InvalidArgument("SMOTE k must be positive");
  const Eigen::VectorXd& labels = *matrix.target;
  std::map<int, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < labels.size(); ++i) members[static_cast<int>(labels(i))].push_back(i);
  std::size_t majority = 0;
  for (const auto& [_, rows] : members) majority = std::max(majority, rows.size());

  std::size_t synthetic_total = 0;
  for (const auto& [label, rows] : members) {
    if (rows.size() == majority) continue;
    if (rows.size() < static_cast<std::size_t>(k) + 1)
      throw PreprocessError("class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                            " members, SMOTE needs at least k+1 = " + std::to_string(k + 1) + "; use a smaller k");
    synthetic_total += majority - rows.size();
  }

  std::vector<bool> snapped(matrix.columns.size());
  for (std::size_t j = 0; j < matrix.columns.size(); ++j)
    snapped[j] = matrix.columns[j].kind == ColumnKind::onehot || matrix.columns[j].kind == ColumnKind::binary;

  FeatureMatrix out;
  out.columns = matrix.columns;
  out.values.resize(matrix.rows() + static_cast<Eigen::Index>(synthetic_total), matrix.cols());
  out.values.topRows(matrix.rows()) = matrix.values;
  Eigen::VectorXd out_labels(out.values.rows());
  out_labels.head(labels.size()) = labels;

  Eigen::Index next = matrix.rows();
  for (const auto& [label, rows] : members) {
    if (rows.size() == majority) continue;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
    const auto m = rows.size();
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(m), matrix.cols());
    for (std::size_t a = 0; a < m; ++a) pts.row(static_cast<Eigen::Index>(a)) = matrix.values.row(rows[a]);

    std::vector<std::vector<std::size_t>> neighbours(m);
    const auto knn = [&](std::size_t a) -> const std::vector<std::size_t>& {
      auto& nb = neighbours[a];
      if (!nb.empty()) return nb;
      std::vector<std::pair<double, std::size_t>> dist;
      dist.reserve(m - 1);
      for (std::size_t b = 0; b < m; ++b) {
        if (b == a) continue;
        const double d = (pts.row(static_cast<Eigen::Index>(a)) - pts.row(static_cast<Eigen::Index>(b))).squaredNorm();
        dist.emplace_back(d, b);
      }
      std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
      for (int t = 0; t < k; ++t) nb.push_back(dist[static_cast<std::size_t>(t)].second);
      return nb;
    };

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    shuffle(rng, order);
    const std::size_t needed = majority - m;
    for (std::size_t s = 0; s < needed; ++s) {
      const std::size_t base = order[s % m];
      const auto& nb = knn(base);
      const std::size_t other = nb[uniform_index(rng, nb.size())];
      const double u = uniform01(rng);
      const auto x = pts.row(static_cast<Eigen::Index>(base));
      const auto y = pts.row(static_cast<Eigen::Index>(other));
      for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
        if (snapped[static_cast<std::size_t>(j)]) {
          out.values(next, j) = u <= 0.5 ? x(j) : y(j);
        } else {
          out.values(next, j) = x(j) + u * (y(j) - x(j));
        }
      }
      out_labels(next) = label;
      ++next;
    }
  }
  out.target = std::move(out_labels);
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

void SplitSpec::validate() const {
  for (double f : {train_fraction, test_fraction, validation_fraction})
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("split fractions must lie in (0, 1)");
  if (std::abs(train_fraction + test_fraction + validation_fraction - 1.0) > 1e-12)
    throw InvalidArgument("split fractions must sum to 1");
}

std::vector<std::vector<std::size_t>> stratified_partition(std::span<const Band> labels,
                                                           std::span<const double> fractions, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> groups(fractions.size());
  for (Band band : kAllBands) {
    std::vector<std::size_t> stratum;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == band) stratum.push_back(i);
    if (stratum.empty()) continue;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(band)));
    shuffle(rng, stratum);
    std::size_t start = 0;
    for (std::size_t g = 0; g < fractions.size(); ++g) {
      std::size_t count = g + 1 == fractions.size()
                              ? stratum.size() - start
                              : static_cast<std::size_t>(std::llround(fractions[g] * static_cast<double>(stratum.size())));
      count = std::min(count, stratum.size() - start);
      if (count == 0)
        throw PreprocessError("split fraction leaves group " + std::to_string(g) + " without any '" +
                              std::string(to_string(band)) + "' records");
      groups[g].insert(groups[g].end(), stratum.begin() + static_cast<std::ptrdiff_t>(start),
                       stratum.begin() + static_cast<std::ptrdiff_t>(start + count));
      start += count;
    }
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());
  return groups;
}

SplitResult split(std::span<const IncidentRecord> records, const SplitSpec& spec) {
  spec.validate();
  if (records.size() < 10) throw InvalidArgument("split needs at least 10 records");
  const auto bands = band_vector(records);
  const std::array<double, 3> fractions{spec.train_fraction, spec.test_fraction, spec.validation_fraction};
  const auto groups = stratified_partition(bands, fractions, spec.seed);
  SplitResult out;
  for (std::size_t i : groups[0]) out.train.push_back(records[i]);
  for (std::size_t i : groups[1]) out.test.push_back(records[i]);
  for (std::size_t i : groups[2]) out.validation.push_back(records[i]);
  return out;
}

}  // namespace incidur
