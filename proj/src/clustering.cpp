#include "incidur/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "incidur/error.hpp"
#include "incidur/learning.hpp"
#include "incidur/random.hpp"

namespace incidur {

namespace {

int nearest(const Eigen::MatrixXd& c, const Eigen::Ref<const Eigen::RowVectorXd>& row, double& dist) {
  int best = 0;
  dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < c.rows(); ++j) {
    const double d = (c.row(j) - row).squaredNorm();
    if (d < dist) {
      dist = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

Eigen::MatrixXd plus_plus(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - c.row(0)).squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2(i);
        if (u < 0.0 && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    }
    c.row(j) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - c.row(j)).squaredNorm());
  }
  return c;
}

KMeansModel lloyd(const Eigen::MatrixXd& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  KMeansModel m;
  m.k = k;
  m.centroids = plus_plus(x, k, rng);
  m.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (int it = 1; it <= max_iter; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& a = m.assignments[static_cast<std::size_t>(i)];
      double d = 0.0;
      int j = nearest(m.centroids, x.row(i), d);
      // Stay put on ties so that a change is always a strict improvement.
      if (a >= 0 && j != a && (m.centroids.row(a) - x.row(i)).squaredNorm() == d) j = a;
      if (j != a) changed = true;
      a = j;
      dist[static_cast<std::size_t>(i)] = d;
      inertia += d;
    }
    m.inertia_history.push_back(inertia);
    m.inertia = inertia;
    m.n_iter = it;
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = m.assignments[static_cast<std::size_t>(i)];
      sums.row(a) += x.row(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        m.centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      taken[static_cast<std::size_t>(far)] = true;
      m.centroids.row(j) = x.row(far);
    }
  }
  return m;
}

}  // namespace

std::vector<int> KMeansModel::assign(const Eigen::MatrixXd& x) const {
  if (x.cols() != centroids.cols()) throw SchemaMismatch("k-means column count mismatch");
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  double d = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = nearest(centroids, x.row(i), d);
  return out;
}

void KMeansModel::save(BinaryWriter& w) const {
  w.i32(k);
  w.mat(centroids);
  w.f64(inertia);
  w.i32(n_iter);
  w.u64(seed);
}

KMeansModel KMeansModel::load(BinaryReader& r) {
  KMeansModel m;
  m.k = r.i32();
  m.centroids = r.mat();
  m.inertia = r.f64();
  m.n_iter = r.i32();
  m.seed = r.u64();
  if (m.k < 1 || m.centroids.rows() != m.k || !m.centroids.allFinite()) throw ArtifactError("k-means section malformed");
  return m;
}

KMeansModel kmeans_fit(const Eigen::MatrixXd& x, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (k > x.rows())
    throw InvalidArgument("k = " + std::to_string(k) + " exceeds the " + std::to_string(x.rows()) + " points");
  if (options.max_iter < 1 || options.restarts < 1) throw InvalidArgument("k-means needs max_iter and restarts >= 1");
  check_finite(x);
  KMeansModel best;
  for (int r = 0; r < options.restarts; ++r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    KMeansModel m = lloyd(x, k, rng, options.max_iter);
    if (r == 0 || m.inertia < best.inertia) best = std::move(m);
  }
  best.seed = seed;
  return best;
}

double silhouette(const Eigen::MatrixXd& x, std::span<const int> assignments) {
  if (static_cast<Eigen::Index>(assignments.size()) != x.rows())
    throw InvalidArgument("silhouette: assignment count does not match rows");
  const std::set<int> ids(assignments.begin(), assignments.end());
  if (ids.size() < 2) throw InvalidArgument("silhouette needs at least two clusters");
  if (*ids.begin() < 0) throw InvalidArgument("silhouette: negative cluster id");
  const int k = *ids.rbegin() + 1;
  std::vector<double> size(static_cast<std::size_t>(k), 0.0);
  for (int a : assignments) size[static_cast<std::size_t>(a)] += 1.0;

  const Eigen::Index n = x.rows();
  std::vector<double> sums(static_cast<std::size_t>(k));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[static_cast<std::size_t>(assignments[static_cast<std::size_t>(j)])] += (x.row(i) - x.row(j)).norm();
    }
    const auto own = static_cast<std::size_t>(assignments[static_cast<std::size_t>(i)]);
    if (size[own] <= 1.0) continue;
    const double a = sums[own] / (size[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c)
      if (c != own && size[c] > 0.0) b = std::min(b, sums[c] / size[c]);
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

std::vector<ElbowPoint> elbow_scan(const Eigen::MatrixXd& x, int k_min, int k_max, std::uint64_t seed,
                                   const KMeansOptions& options) {
  if (k_min > k_max) throw InvalidArgument("elbow scan: empty k range");
  if (k_min < 1 || k_max > x.rows()) throw InvalidArgument("elbow scan: k range must lie within [1, n]");
  std::vector<ElbowPoint> out;
  for (int k = k_min; k <= k_max; ++k) out.push_back({k, kmeans_fit(x, k, seed, options).inertia});
  return out;
}

int elbow_k(std::span<const ElbowPoint> scan) {
  if (scan.size() < 3) throw InvalidArgument("elbow needs at least three scan points");
  const double floor = 1e-12 * std::max(scan.front().inertia, 1e-300);
  int best = scan[1].k;
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < scan.size(); ++i) {
    const double before = scan[i - 1].inertia - scan[i].inertia;
    const double after = std::max(scan[i].inertia - scan[i + 1].inertia, floor);
    const double ratio = before / after;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = scan[i].k;
    }
  }
  return best;
}

ClusterScaler ClusterScaler::fit(const FeatureMatrix& matrix) {
  ClusterScaler s;
  const Eigen::Index p = matrix.cols();
  s.mean = Eigen::RowVectorXd::Zero(p);
  s.scale = Eigen::RowVectorXd::Ones(p);
  const auto n = static_cast<double>(matrix.rows());
  for (Eigen::Index j = 0; j < p; ++j) {
    const ColumnKind kind = matrix.columns[static_cast<std::size_t>(j)].kind;
    if (kind == ColumnKind::onehot || kind == ColumnKind::binary) continue;
    const auto col = matrix.values.col(j);
    s.mean(j) = col.mean();
    const double sd = std::sqrt((col.array() - s.mean(j)).square().sum() / n);
    if (sd > 0.0) s.scale(j) = sd;
  }
  return s;
}

Eigen::MatrixXd ClusterScaler::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw SchemaMismatch("cluster scaler column count mismatch");
  return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

void ClusterScaler::save(BinaryWriter& w) const {
  w.vec(mean.transpose());
  w.vec(scale.transpose());
}

ClusterScaler ClusterScaler::load(BinaryReader& r) {
  ClusterScaler s;
  s.mean = r.vec().transpose();
  s.scale = r.vec().transpose();
  if (s.mean.size() != s.scale.size()) throw ArtifactError("cluster scaler section malformed");
  return s;
}

}  // namespace incidur
