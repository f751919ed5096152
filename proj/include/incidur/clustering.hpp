#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "incidur/binary_io.hpp"
#include "incidur/domain.hpp"

namespace incidur {

struct KMeansModel {
  int k = 0;
  Eigen::MatrixXd centroids;  // k x p
  double inertia = 0.0;
  int n_iter = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignments;         // training rows; not persisted
  std::vector<double> inertia_history;  // after each assignment step; not persisted

  // Nearest centroid per row; ties go to the lower index.
  std::vector<int> assign(const Eigen::MatrixXd& x) const;

  void save(BinaryWriter& w) const;
  static KMeansModel load(BinaryReader& r);
};

struct KMeansOptions {
  int max_iter = 300;
  int restarts = 5;
};

// k-means++ seeding and Lloyd iterations, best of `restarts` runs by inertia.
KMeansModel kmeans_fit(const Eigen::MatrixXd& x, int k, std::uint64_t seed, const KMeansOptions& options = {});

// Mean silhouette. Singleton clusters contribute 0, as do points with
// a = b = 0.
double silhouette(const Eigen::MatrixXd& x, std::span<const int> assignments);

struct ElbowPoint {
  int k;
  double inertia;
};

std::vector<ElbowPoint> elbow_scan(const Eigen::MatrixXd& x, int k_min, int k_max, std::uint64_t seed,
                                   const KMeansOptions& options = {});
// Interior k whose inertia drop is largest relative to the next drop; needs
// three or more consecutive points. The ratio ignores the overall scale, so
// blobs on a grid do not make the first split look like the elbow.
int elbow_k(std::span<const ElbowPoint> scan);

// Zero-mean, unit-variance scaling of numeric and ordinal columns; one-hot
// and binary columns pass through.
struct ClusterScaler {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static ClusterScaler fit(const FeatureMatrix& matrix);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;

  void save(BinaryWriter& w) const;
  static ClusterScaler load(BinaryReader& r);
};

}  // namespace incidur
