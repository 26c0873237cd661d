#pragma once

#include <Eigen/Dense>
#include <iostream>
#include <vector>

#include "framemae/errors.hpp"
#include "framemae/frontend.hpp"
#include "framemae/kmeans.hpp"
#include "framemae/rng.hpp"

namespace framemae {

using IndexMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

struct Codebook {
  Mat entries;  // K_cb x F
  int stage = 0;
};

// Per-stage codebook indices, Q x T, 0-based values in [0, K_cb).
struct TokenTargets {
  IndexMat indices;

  Eigen::Index num_codebooks() const { return indices.rows(); }
  Eigen::Index frames() const { return indices.cols(); }
};

struct CodebookWeights {
  Eigen::VectorXd gamma;  // non-negative, sums to 1
};

struct RvqEncoding {
  TokenTargets targets;
  Eigen::VectorXd residual_energy;  // mean ||r_{q+1}||^2 over frames, per stage
};

// Greedy residual cascade: each stage maps the running residual to its
// nearest codebook entry (squared Euclidean, ties to lowest index) and
// subtracts it.
inline RvqEncoding rvq_encode(const Mat& x, const std::vector<Codebook>& books) {
  if (books.empty()) throw ConfigError("rvq_encode: no codebooks");
  const Eigen::Index T = x.rows();
  const Eigen::Index Q = static_cast<Eigen::Index>(books.size());
  for (const auto& b : books)
    if (b.entries.cols() != x.cols())
      throw ShapeError("rvq_encode: feature dim does not match codebook dim");

  RvqEncoding out;
  out.targets.indices.resize(Q, T);
  out.residual_energy.resize(Q);
  Mat residual = x;
  KMeansModel stage_model;
  for (Eigen::Index q = 0; q < Q; ++q) {
    stage_model.centroids = books[static_cast<size_t>(q)].entries;
    stage_model.k = static_cast<int>(stage_model.centroids.rows());
    const std::vector<int> labels = kmeans_assign(stage_model, residual);
    for (Eigen::Index t = 0; t < T; ++t) {
      const int idx = labels[static_cast<size_t>(t)];
      out.targets.indices(q, t) = idx;
      residual.row(t) -= stage_model.centroids.row(idx);
    }
    out.residual_energy(q) = residual.rowwise().squaredNorm().mean();
  }
  return out;
}

// Sum of selected entries over the cascade; empty cascade decodes to zero.
inline Mat rvq_decode(const TokenTargets& t, const std::vector<Codebook>& books,
                      Eigen::Index feature_dim = -1) {
  if (static_cast<size_t>(t.num_codebooks()) > books.size())
    throw ShapeError("rvq_decode: more target rows than codebooks");
  if (feature_dim < 0)
    feature_dim = books.empty() ? 0 : books.front().entries.cols();
  Mat out = Mat::Zero(t.frames(), feature_dim);
  for (Eigen::Index q = 0; q < t.num_codebooks(); ++q) {
    const Mat& entries = books[static_cast<size_t>(q)].entries;
    for (Eigen::Index i = 0; i < t.frames(); ++i) {
      const int idx = t.indices(q, i);
      if (idx < 0 || idx >= entries.rows())
        throw FormatError("rvq_decode: token index out of range");
      out.row(i) += entries.row(idx);
    }
  }
  return out;
}

// Fit the residual cascade stage by stage with k-means on the stage residuals.
inline std::vector<Codebook> train_codebooks(const std::vector<Mat>& corpus, int num_codebooks,
                                             int codebook_size, Rng& rng, int max_iter = 50) {
  if (num_codebooks < 1) throw ConfigError("train_codebooks: need >= 1 codebook");
  if (codebook_size < 2) throw ConfigError("train_codebooks: codebook size must be >= 2");
  Eigen::Index total = 0;
  for (const auto& m : corpus) total += m.rows();
  if (total < codebook_size)
    throw ConfigError("train_codebooks: fewer corpus frames than codebook entries");

  Mat residual(total, corpus.front().cols());
  Eigen::Index row = 0;
  for (const auto& m : corpus) {
    residual.middleRows(row, m.rows()) = m;
    row += m.rows();
  }

  std::vector<Codebook> books;
  books.reserve(static_cast<size_t>(num_codebooks));
  for (int q = 0; q < num_codebooks; ++q) {
    KMeansModel km = kmeans_fit(residual, codebook_size, rng, max_iter);
    Codebook book;
    book.entries = km.centroids;
    book.stage = q;
    const std::vector<int> labels = kmeans_assign(km, residual);
    for (Eigen::Index i = 0; i < residual.rows(); ++i)
      residual.row(i) -= km.centroids.row(labels[static_cast<size_t>(i)]);
    books.push_back(std::move(book));
  }
  return books;
}

// gamma_q proportional to the mean stage-q quantization error over the
// sample, normalized to sum to 1. Zero total error falls back to uniform.
inline CodebookWeights compute_gamma(const std::vector<Codebook>& books,
                                     const std::vector<Mat>& sample) {
  if (sample.empty()) throw ConfigError("compute_gamma: empty sample");
  const Eigen::Index Q = static_cast<Eigen::Index>(books.size());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(Q);
  for (const auto& x : sample) acc += rvq_encode(x, books).residual_energy;
  acc /= static_cast<double>(sample.size());
  CodebookWeights w;
  const double total = acc.sum();
  if (total <= 0.0) {
    std::cerr << "compute_gamma: zero quantization error, using uniform weights\n";
    w.gamma = Eigen::VectorXd::Constant(Q, 1.0 / static_cast<double>(Q));
  } else {
    w.gamma = acc / total;
  }
  return w;
}

}  // namespace framemae
