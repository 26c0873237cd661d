#include <doctest.h>

#include "framemae/kmeans.hpp"

using namespace framemae;

namespace {

Mat random_points(Eigen::Index n, Eigen::Index d, Rng& rng) {
  return Mat::NullaryExpr(n, d, [&]() { return rng.normal(); });
}

// Brute-force per-point nearest centroid, computed with explicit differences.
std::vector<int> brute_assign(const Mat& centroids, const Mat& points) {
  std::vector<int> labels(static_cast<size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = (points.row(i) - centroids.row(0)).squaredNorm();
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d - 1e-12) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<size_t>(i)] = best;
  }
  return labels;
}

}  // namespace

TEST_CASE("assignment matches brute-force nearest neighbors") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    KMeansModel m;
    m.k = 7;
    m.centroids = random_points(7, 5, rng);
    const Mat points = random_points(60, 5, rng);
    CHECK(kmeans_assign(m, points) == brute_assign(m.centroids, points));
  }
}

TEST_CASE("duplicate centroids tie to the lowest index") {
  KMeansModel m;
  m.k = 3;
  m.centroids = Mat::Zero(3, 2);
  m.centroids.row(2) << 10.0, 10.0;
  const Mat points = Mat::Zero(4, 2);
  for (int label : kmeans_assign(m, points)) CHECK(label == 0);
}

TEST_CASE("Lloyd iterations never increase the distortion") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat points = random_points(200, 4, rng);
    std::vector<double> log;
    kmeans_fit(points, 8, rng, 300, &log);
    REQUIRE(log.size() >= 2);
    for (size_t i = 1; i < log.size(); ++i) REQUIRE(log[i] <= log[i - 1] + 1e-9);
  }
}

TEST_CASE("well-separated clusters are recovered exactly") {
  Rng rng(3);
  Mat points(90, 2);
  std::vector<int> truth(90);
  const double centers[3][2] = {{0, 0}, {100, 0}, {0, 100}};
  for (int i = 0; i < 90; ++i) {
    const int c = i % 3;
    truth[static_cast<size_t>(i)] = c;
    points(i, 0) = centers[c][0] + 0.1 * rng.normal();
    points(i, 1) = centers[c][1] + 0.1 * rng.normal();
  }
  const KMeansModel m = kmeans_fit(points, 3, rng);
  const std::vector<int> labels = kmeans_assign(m, points);
  // same ground-truth cluster -> same label, different -> different
  for (int i = 0; i < 90; ++i)
    for (int j = i + 1; j < 90; ++j)
      REQUIRE((labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)]) ==
              (truth[static_cast<size_t>(i)] == truth[static_cast<size_t>(j)]));
}

TEST_CASE("k=1 converges to the exact mean") {
  Rng rng(4);
  const Mat points = random_points(50, 3, rng);
  const KMeansModel m = kmeans_fit(points, 1, rng);
  const Eigen::RowVectorXd mean = points.colwise().mean();
  CHECK((m.centroids.row(0) - mean).norm() < 1e-12);
}

TEST_CASE("two points, two clusters: optimal partition via brute force") {
  // With n=4 1-D points and k=2, enumerate all 2-partitions to find the
  // minimum distortion and confirm the fit attains it.
  Rng rng(5);
  Mat points(4, 1);
  points << 0.0, 1.0, 9.0, 10.5;
  const KMeansModel m = kmeans_fit(points, 2, rng);
  const std::vector<int> labels = kmeans_assign(m, points);
  const double got = kmeans_distortion(m, points, labels);

  double best = std::numeric_limits<double>::infinity();
  for (int mask = 1; mask < 15; ++mask) {  // proper non-empty bipartitions
    double s0 = 0, s1 = 0;
    int n0 = 0, n1 = 0;
    for (int i = 0; i < 4; ++i)
      (mask >> i & 1) ? (s1 += points(i, 0), ++n1) : (s0 += points(i, 0), ++n0);
    const double c0 = s0 / n0, c1 = s1 / n1;
    double d = 0;
    for (int i = 0; i < 4; ++i) {
      const double c = (mask >> i & 1) ? c1 : c0;
      d += (points(i, 0) - c) * (points(i, 0) - c);
    }
    best = std::min(best, d / 4.0);
  }
  CHECK(got == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("fit is deterministic for a fixed seed") {
  Rng r1(9), r2(9);
  Mat points;
  {
    Rng gen(42);
    points = random_points(120, 6, gen);
  }
  const KMeansModel a = kmeans_fit(points, 10, r1);
  const KMeansModel b = kmeans_fit(points, 10, r2);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("invalid configurations are rejected") {
  Rng rng(1);
  const Mat points = Mat::Zero(3, 2);
  CHECK_THROWS_AS(kmeans_fit(points, 0, rng), ConfigError);
  CHECK_THROWS_AS(kmeans_fit(points, 4, rng), ConfigError);
  KMeansModel m;
  m.k = 2;
  m.centroids = Mat::Zero(2, 3);
  CHECK_THROWS_AS(kmeans_assign(m, points), ShapeError);
}

TEST_CASE("duplicate points still yield k centroids") {
  Rng rng(6);
  Mat points = Mat::Zero(20, 2);  // all identical
  const KMeansModel m = kmeans_fit(points, 3, rng);
  CHECK(m.centroids.rows() == 3);
  const std::vector<int> labels = kmeans_assign(m, points);
  CHECK(kmeans_distortion(m, points, labels) == doctest::Approx(0.0));
}
