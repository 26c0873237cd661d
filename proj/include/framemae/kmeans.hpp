#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "framemae/errors.hpp"
#include "framemae/rng.hpp"

namespace framemae {

using Mat = Eigen::MatrixXd;

struct KMeansModel {
  Mat centroids;  // k x D
  int k = 0;
};

// Nearest centroid per point, squared Euclidean, ties to the lowest index.
inline std::vector<int> kmeans_assign(const KMeansModel& m, const Mat& points) {
  if (points.cols() != m.centroids.cols())
    throw ShapeError("kmeans_assign: dimension mismatch");
  // ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2; ||x||^2 is constant per row.
  const Eigen::VectorXd c_norms = m.centroids.rowwise().squaredNorm();
  Mat scores = (points * m.centroids.transpose()) * -2.0;
  scores.rowwise() += c_norms.transpose();
  std::vector<int> labels(static_cast<size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_score = scores(i, 0);
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) < best_score) {
        best_score = scores(i, j);
        best = static_cast<int>(j);
      }
    }
    labels[static_cast<size_t>(i)] = best;
  }
  return labels;
}

inline double kmeans_distortion(const KMeansModel& m, const Mat& points,
                                const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (points.row(i) - m.centroids.row(labels[static_cast<size_t>(i)])).squaredNorm();
  return total / static_cast<double>(points.rows());
}

// k-means++ seeding followed by Lloyd iterations until the assignment reaches
// a fixpoint or max_iter. Empty clusters are re-seeded to the point farthest
// from its current centroid.
inline KMeansModel kmeans_fit(const Mat& points, int k, Rng& rng, int max_iter = 300,
                              std::vector<double>* distortion_log = nullptr) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ConfigError("kmeans k must be >= 1");
  if (n < k) throw ConfigError("kmeans: fewer points than clusters");

  KMeansModel model;
  model.k = k;
  model.centroids.resize(k, points.cols());

  // k-means++ init.
  std::vector<double> d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  const Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_int(static_cast<uint64_t>(n)));
  model.centroids.row(0) = points.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (points.row(i) - model.centroids.row(c - 1)).squaredNorm();
      if (d < d2[static_cast<size_t>(i)]) d2[static_cast<size_t>(i)] = d;
      total += d2[static_cast<size_t>(i)];
    }
    Eigen::Index chosen = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<size_t>(i)];
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<Eigen::Index>(rng.uniform_int(static_cast<uint64_t>(n)));
    }
    model.centroids.row(c) = points.row(chosen);
  }

  std::vector<int> labels(static_cast<size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    std::vector<int> new_labels = kmeans_assign(model, points);
    if (distortion_log)
      distortion_log->push_back(kmeans_distortion(model, points, new_labels));
    if (new_labels == labels) break;
    labels = std::move(new_labels);

    Mat sums = Mat::Zero(k, points.cols());
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<size_t>(i)]) += points.row(i);
      counts[static_cast<size_t>(labels[static_cast<size_t>(i)])]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        model.centroids.row(c) = sums.row(c) / counts[static_cast<size_t>(c)];
      } else {
        // Re-seed to the point farthest from its assigned centroid.
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d =
              (points.row(i) - model.centroids.row(labels[static_cast<size_t>(i)])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        model.centroids.row(c) = points.row(far);
      }
    }
  }
  return model;
}

}  // namespace framemae
