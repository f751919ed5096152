#include <gtest/gtest.h>

#include <cmath>

#include "incidur/clustering.hpp"
#include "incidur/error.hpp"
#include "support.hpp"

using namespace incidur;
using incidur::testing::random_matrix;

namespace {

// Four tight blobs at the corners of a square of side 20.
Eigen::MatrixXd four_blobs(Rng& rng, int per_blob) {
  const double centres[4][2] = {{0, 0}, {20, 0}, {0, 20}, {20, 20}};
  Eigen::MatrixXd x(4 * per_blob, 2);
  for (int b = 0; b < 4; ++b)
    for (int i = 0; i < per_blob; ++i)
      for (int j = 0; j < 2; ++j) x(b * per_blob + i, j) = centres[b][j] + 0.5 * standard_normal(rng);
  return x;
}

double inertia_of(const Eigen::MatrixXd& x, const KMeansModel& m) {
  const auto a = m.assign(x);
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) s += (x.row(i) - m.centroids.row(a[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

}  // namespace

TEST(KMeans, TwoPairs) {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 0, 1, 10, 10, 10, 11;
  const KMeansModel m = kmeans_fit(x, 2, 1);
  std::vector<std::pair<double, double>> c;
  for (int k = 0; k < 2; ++k) c.emplace_back(m.centroids(k, 0), m.centroids(k, 1));
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c[0], std::make_pair(0.0, 0.5));
  EXPECT_EQ(c[1], std::make_pair(10.0, 10.5));
  EXPECT_DOUBLE_EQ(m.inertia, 1.0);
}

TEST(KMeans, OneClusterIsTheMean) {
  Rng rng(1);
  const Eigen::MatrixXd x = random_matrix(rng, 50, 3);
  const KMeansModel m = kmeans_fit(x, 1, 2);
  EXPECT_TRUE(m.centroids.row(0).isApprox(x.colwise().mean(), 1e-12));
  EXPECT_NEAR(m.inertia, (x.rowwise() - x.colwise().mean()).squaredNorm(), 1e-9);
}

TEST(KMeans, EveryPointItsOwnCluster) {
  Rng rng(2);
  const Eigen::MatrixXd x = random_matrix(rng, 12, 2);
  EXPECT_EQ(kmeans_fit(x, 12, 3).inertia, 0.0);
  EXPECT_THROW(kmeans_fit(x, 13, 3), InvalidArgument);
  EXPECT_THROW(kmeans_fit(x, 0, 3), InvalidArgument);
}

TEST(KMeans, InertiaMonotoneAndConsistent) {
  Rng rng(3);
  const Eigen::MatrixXd x = random_matrix(rng, 300, 4);
  for (int k = 2; k <= 6; ++k) {
    const KMeansModel m = kmeans_fit(x, k, static_cast<std::uint64_t>(k));
    ASSERT_FALSE(m.inertia_history.empty());
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
      EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1]);
    EXPECT_NEAR(m.inertia, inertia_of(x, m), 1e-9 * m.inertia);
    // Converged assignments are nearest-centroid.
    EXPECT_EQ(m.assign(x), m.assignments);
  }
}

TEST(KMeans, Deterministic) {
  Rng rng(4);
  const Eigen::MatrixXd x = random_matrix(rng, 100, 3);
  EXPECT_EQ(kmeans_fit(x, 3, 8).centroids, kmeans_fit(x, 3, 8).centroids);
}

TEST(KMeans, SerializationRoundTrip) {
  Rng rng(5);
  const Eigen::MatrixXd x = random_matrix(rng, 60, 2);
  const KMeansModel m = kmeans_fit(x, 3, 1);
  BinaryWriter w;
  m.save(w);
  BinaryReader r(w.data());
  EXPECT_EQ(KMeansModel::load(r).assign(x), m.assign(x));
}

TEST(Silhouette, SeparatedClustersNearOne) {
  Rng rng(6);
  const Eigen::MatrixXd x = four_blobs(rng, 25);
  std::vector<int> a(100);
  for (int i = 0; i < 100; ++i) a[static_cast<std::size_t>(i)] = i / 25;
  EXPECT_GT(silhouette(x, a), 0.9);
}

TEST(Silhouette, Conventions) {
  const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(6, 2);
  EXPECT_EQ(silhouette(same, std::vector<int>{0, 0, 0, 1, 1, 1}), 0.0);
  Eigen::MatrixXd x(3, 1);
  x << 0, 0.1, 5;
  // The singleton contributes 0, the others are close to 1.
  const double s = silhouette(x, std::vector<int>{0, 0, 1});
  EXPECT_NEAR(s, (2.0 * (1.0 - 0.1 / 4.95)) / 3.0, 0.01);
  EXPECT_THROW(silhouette(x, std::vector<int>{0, 0, 0}), InvalidArgument);
}

TEST(Silhouette, BoundedAndRigidInvariant) {
  Rng rng(7);
  const Eigen::MatrixXd x = random_matrix(rng, 80, 2);
  std::vector<int> a(80);
  for (auto& v : a) v = static_cast<int>(uniform_index(rng, 3));
  const double s = silhouette(x, a);
  EXPECT_GE(s, -1.0);
  EXPECT_LE(s, 1.0);
  const double th = 0.7;
  Eigen::Matrix2d rot;
  rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  Eigen::MatrixXd moved = x * rot.transpose();
  moved.rowwise() += Eigen::RowVector2d(100.0, -3.0);
  EXPECT_NEAR(silhouette(moved, a), s, 1e-9);
}

TEST(Elbow, FourBlobs) {
  Rng rng(8);
  const Eigen::MatrixXd x = four_blobs(rng, 30);
  const auto scan = elbow_scan(x, 1, 8, 5);
  ASSERT_EQ(scan.size(), 8u);
  for (std::size_t i = 1; i < scan.size(); ++i) EXPECT_LE(scan[i].inertia, scan[i - 1].inertia + 1e-9);
  EXPECT_NEAR(scan[0].inertia, (x.rowwise() - x.colwise().mean()).squaredNorm(), 1e-6);
  const double drop_to_4 = scan[2].inertia - scan[3].inertia;
  const double drop_after = scan[3].inertia - scan[4].inertia;
  EXPECT_GT(drop_to_4, 20.0 * drop_after);
  EXPECT_EQ(elbow_k(scan), 4);
  EXPECT_EQ(elbow_k(elbow_scan(x, 2, 8, 5)), 4);
}

TEST(Elbow, PicksSharpestRelativeDrop) {
  const std::vector<ElbowPoint> scan{{1, 100.0}, {2, 50.0}, {3, 10.0}, {4, 9.0}, {5, 8.5}};
  EXPECT_EQ(elbow_k(scan), 3);
  EXPECT_THROW(elbow_k(std::span<const ElbowPoint>(scan.data(), 2)), InvalidArgument);
}

TEST(Elbow, FullRangeEndsAtZero) {
  Rng rng(9);
  const Eigen::MatrixXd x = random_matrix(rng, 6, 2);
  const auto scan = elbow_scan(x, 1, 6, 1);
  EXPECT_EQ(scan.back().inertia, 0.0);
  EXPECT_THROW(elbow_scan(x, 3, 2, 1), InvalidArgument);
  EXPECT_THROW(elbow_scan(x, 1, 7, 1), InvalidArgument);
}

TEST(ClusterScaler, StandardisesNumericOnly) {
  FeatureMatrix m;
  m.columns = {{"a", ColumnKind::numeric, "a"}, {"b=x", ColumnKind::onehot, "b"}, {"c", ColumnKind::ordinal, "c"}};
  m.values.resize(4, 3);
  m.values << 1, 1, 1, 2, 0, 2, 3, 1, 3, 4, 0, 5;
  const auto s = ClusterScaler::fit(m);
  const Eigen::MatrixXd z = s.apply(m.values);
  EXPECT_NEAR(z.col(0).mean(), 0.0, 1e-12);
  EXPECT_NEAR(z.col(0).squaredNorm() / 4.0, 1.0, 1e-12);
  EXPECT_EQ(z.col(1), m.values.col(1));
  EXPECT_NEAR(z.col(2).mean(), 0.0, 1e-12);
}
