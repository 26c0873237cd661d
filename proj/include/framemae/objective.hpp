#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "framemae/errors.hpp"
#include "framemae/masking.hpp"
#include "framemae/rvq.hpp"

namespace framemae {

// Per-codebook class posteriors, one T x K matrix per codebook; rows sum to 1.
struct Posteriors {
  std::vector<Mat> probs;

  Eigen::Index num_codebooks() const { return static_cast<Eigen::Index>(probs.size()); }
};

struct LossConfig {
  double delta = 0.9;          // weight fraction for the masked region
  Eigen::VectorXd gamma;       // per-codebook weights, sum to 1
};

inline Posteriors posteriors_from_logits(const std::vector<Mat>& logits) {
  Posteriors p;
  p.probs.reserve(logits.size());
  for (const Mat& z : logits) {
    Mat probs(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const double mx = z.row(r).maxCoeff();
      probs.row(r) = (z.row(r).array() - mx).exp();
      probs.row(r) /= probs.row(r).sum();
    }
    p.probs.push_back(std::move(probs));
  }
  return p;
}

namespace objective_detail {

inline void check_shapes(const TokenTargets& y, const Posteriors& yhat, const MaskSpec& m) {
  if (yhat.num_codebooks() != y.num_codebooks())
    throw ShapeError("loss: codebook count mismatch");
  for (const Mat& p : yhat.probs)
    if (p.rows() != y.frames() || p.rows() != m.total)
      throw ShapeError("loss: frame count mismatch");
}

// alpha for masked frames, beta for unmasked; the unmasked term is omitted
// when everything is masked.
inline std::pair<double, double> region_weights(const MaskSpec& m, double delta) {
  const int masked = m.num_masked();
  if (masked == 0) throw ConfigError("loss requires at least one masked frame");
  const double alpha = delta / masked;
  const double beta = (masked == m.total) ? 0.0 : (1.0 - delta) / (m.total - masked);
  return {alpha, beta};
}

}  // namespace objective_detail

// L = sum_q gamma_q [ alpha * sum_{t in M} -log p + beta * sum_{t not in M} -log p ].
inline double weighted_ce(const TokenTargets& y, const Posteriors& yhat, const MaskSpec& m,
                          const LossConfig& cfg) {
  objective_detail::check_shapes(y, yhat, m);
  if (cfg.gamma.size() != y.num_codebooks())
    throw ShapeError("loss: gamma size != codebook count");
  const auto [alpha, beta] = objective_detail::region_weights(m, cfg.delta);
  double total = 0.0;
  for (Eigen::Index q = 0; q < y.num_codebooks(); ++q) {
    const Mat& p = yhat.probs[static_cast<size_t>(q)];
    double masked_sum = 0.0, unmasked_sum = 0.0;
    for (int t : m.masked) {
      const double prob = p(t, y.indices(q, t));
      if (prob <= 0.0) throw NumericError("loss: non-positive posterior");
      masked_sum -= std::log(prob + 1e-12);
    }
    for (int t : m.visible) {
      const double prob = p(t, y.indices(q, t));
      if (prob <= 0.0) throw NumericError("loss: non-positive posterior");
      unmasked_sum -= std::log(prob + 1e-12);
    }
    total += cfg.gamma(q) * (alpha * masked_sum + beta * unmasked_sum);
  }
  return total;
}

// Loss computed from logits via a stable log-softmax; fills dlogits with the
// exact gradient gamma_q * w_t * (softmax - onehot).
inline double weighted_ce_from_logits(const TokenTargets& y, const std::vector<Mat>& logits,
                                      const MaskSpec& m, const LossConfig& cfg,
                                      std::vector<Mat>* dlogits = nullptr) {
  if (static_cast<Eigen::Index>(logits.size()) != y.num_codebooks())
    throw ShapeError("loss: codebook count mismatch");
  if (cfg.gamma.size() != y.num_codebooks())
    throw ShapeError("loss: gamma size != codebook count");
  const auto [alpha, beta] = objective_detail::region_weights(m, cfg.delta);
  std::vector<char> is_masked(static_cast<size_t>(m.total), 0);
  for (int t : m.masked) is_masked[static_cast<size_t>(t)] = 1;
  if (dlogits) dlogits->resize(logits.size());
  double total = 0.0;
  for (size_t q = 0; q < logits.size(); ++q) {
    const Mat& z = logits[q];
    if (z.rows() != m.total) throw ShapeError("loss: frame count mismatch");
    Mat* dz = nullptr;
    if (dlogits) {
      (*dlogits)[q] = Mat::Zero(z.rows(), z.cols());
      dz = &(*dlogits)[q];
    }
    const double gq = cfg.gamma(static_cast<Eigen::Index>(q));
    for (Eigen::Index t = 0; t < z.rows(); ++t) {
      const double w = gq * (is_masked[static_cast<size_t>(t)] ? alpha : beta);
      if (w == 0.0) continue;
      const double mx = z.row(t).maxCoeff();
      const Eigen::ArrayXd e = (z.row(t).array() - mx).exp();
      const double lse = mx + std::log(e.sum());
      const int target = y.indices(static_cast<Eigen::Index>(q), t);
      total += w * (lse - z(t, target));
      if (dz) {
        dz->row(t) = (w * (e / e.sum())).matrix();
        (*dz)(t, target) -= w;
      }
    }
  }
  return total;
}

// Per-codebook fraction of masked frames whose argmax posterior hits the
// target.
inline Eigen::VectorXd masked_accuracy(const TokenTargets& y, const Posteriors& yhat,
                                       const MaskSpec& m) {
  objective_detail::check_shapes(y, yhat, m);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(y.num_codebooks());
  if (m.masked.empty()) return acc;
  for (Eigen::Index q = 0; q < y.num_codebooks(); ++q) {
    const Mat& p = yhat.probs[static_cast<size_t>(q)];
    int hits = 0;
    for (int t : m.masked) {
      Eigen::Index argmax = 0;
      p.row(t).maxCoeff(&argmax);
      if (argmax == y.indices(q, t)) ++hits;
    }
    acc(q) = static_cast<double>(hits) / static_cast<double>(m.masked.size());
  }
  return acc;
}

}  // namespace framemae
