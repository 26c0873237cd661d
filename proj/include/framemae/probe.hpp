#pragma once

// Frozen-representation evaluation: time-pooled embeddings -> MLP probe with
// a small hyperparameter grid, accuracy / mAP metrics, percentile-bootstrap
// confidence intervals and a z-normalized clipped global score.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "framemae/errors.hpp"
#include "framemae/rng.hpp"

namespace framemae {

using Mat = Eigen::MatrixXd;

struct ProbeReport {
  std::string task;
  std::string metric_name;  // "accuracy" or "map"
  double metric = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double deviation = 0.0;        // max distance from the point estimate
  double global_contrib = 0.0;   // clipped z-score for this task
};

inline Eigen::RowVectorXd pool_mean(const Mat& frames) {
  if (frames.rows() == 0) throw ShapeError("pool_mean: empty sequence");
  return frames.colwise().mean();
}

// --- MLP probe --------------------------------------------------------------

struct ProbeGridPoint {
  int hidden = 64;       // 0 = linear probe
  double lr = 1e-3;
  double dropout = 0.0;
};

inline std::vector<ProbeGridPoint> default_probe_grid() {
  std::vector<ProbeGridPoint> grid;
  for (int hidden : {64, 256})
    for (double lr : {1e-3, 1e-4})
      for (double dropout : {0.0, 0.3}) grid.push_back({hidden, lr, dropout});
  return grid;
}

// One-hidden-layer classifier; softmax cross-entropy for multiclass targets,
// per-class sigmoid BCE when multilabel is set.
struct ProbeModel {
  Mat w1, b1;  // empty when linear
  Mat w2, b2;
  int hidden = 0;
  bool multilabel = false;

  Mat scores(const Mat& x) const {
    if (hidden == 0) {
      Mat z = x * w2;
      z.rowwise() += b2.row(0);
      return z;
    }
    Mat h = x * w1;
    h.rowwise() += b1.row(0);
    h = h.cwiseMax(0.0);  // ReLU
    Mat z = h * w2;
    z.rowwise() += b2.row(0);
    return z;
  }

  std::vector<int> predict_class(const Mat& x) const {
    const Mat z = scores(x);
    std::vector<int> out(static_cast<size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      Eigen::Index argmax = 0;
      z.row(i).maxCoeff(&argmax);
      out[static_cast<size_t>(i)] = static_cast<int>(argmax);
    }
    return out;
  }
};

namespace probe_detail {

inline Mat softmax_rows(const Mat& z) {
  Mat p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    p.row(r) = (z.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

struct Adam1 {
  Mat m, v;
  int t = 0;
  void step(Mat& p, const Mat& g, double lr) {
    if (m.size() == 0) {
      m = Mat::Zero(p.rows(), p.cols());
      v = Mat::Zero(p.rows(), p.cols());
    }
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(0.9, t);
    const double bc2 = 1.0 - std::pow(0.999, t);
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + 1e-8);
  }
};

}  // namespace probe_detail

// Full-batch Adam for a fixed epoch budget; deterministic per rng state.
// y is N x C (one-hot for multiclass, multi-hot for multilabel).
inline ProbeModel fit_probe(const Mat& x, const Mat& y, const ProbeGridPoint& gp,
                            bool multilabel, Rng& rng, int epochs = 200) {
  const Eigen::Index n = x.rows(), d = x.cols(), c = y.cols();
  ProbeModel model;
  model.hidden = gp.hidden;
  model.multilabel = multilabel;
  const Eigen::Index h = gp.hidden > 0 ? gp.hidden : d;
  if (gp.hidden > 0) {
    model.w1 = Mat::NullaryExpr(d, h, [&]() { return 0.1 * rng.normal(); });
    model.b1 = Mat::Zero(1, h);
  }
  model.w2 = Mat::NullaryExpr(gp.hidden > 0 ? h : d, c, [&]() { return 0.1 * rng.normal(); });
  model.b2 = Mat::Zero(1, c);

  probe_detail::Adam1 opt_w1, opt_b1, opt_w2, opt_b2;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Mat hidden_act, drop_mask;
    Mat z;
    if (gp.hidden > 0) {
      hidden_act = x * model.w1;
      hidden_act.rowwise() += model.b1.row(0);
      hidden_act = hidden_act.cwiseMax(0.0);
      if (gp.dropout > 0.0) {
        drop_mask = Mat::NullaryExpr(n, h, [&]() {
          return rng.uniform() < gp.dropout ? 0.0 : 1.0 / (1.0 - gp.dropout);
        });
        hidden_act = hidden_act.cwiseProduct(drop_mask);
      }
      z = hidden_act * model.w2;
    } else {
      z = x * model.w2;
    }
    z.rowwise() += model.b2.row(0);

    Mat dz;
    if (multilabel) {
      const Mat p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
      dz = (p - y) / static_cast<double>(n);
    } else {
      dz = (probe_detail::softmax_rows(z) - y) / static_cast<double>(n);
    }
    const Mat& input2 = gp.hidden > 0 ? hidden_act : x;
    Mat gw2 = input2.transpose() * dz;
    Mat gb2 = dz.colwise().sum();
    opt_w2.step(model.w2, gw2, gp.lr);
    opt_b2.step(model.b2, gb2, gp.lr);
    if (gp.hidden > 0) {
      Mat dh = dz * model.w2.transpose();
      if (gp.dropout > 0.0) dh = dh.cwiseProduct(drop_mask);
      dh = (dh.array() * (hidden_act.array() > 0.0).cast<double>()).matrix();
      Mat gw1 = x.transpose() * dh;
      Mat gb1 = dh.colwise().sum();
      opt_w1.step(model.w1, gw1, gp.lr);
      opt_b1.step(model.b1, gb1, gp.lr);
    }
  }
  return model;
}

inline Mat one_hot(const std::vector<int>& labels, int classes) {
  Mat y = Mat::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw ConfigError("label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw ShapeError("accuracy: size mismatch or empty");
  int hits = 0;
  for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

struct TrainedProbe {
  ProbeModel model;
  ProbeGridPoint chosen;
  double val_score = 0.0;
};

// Grid search selecting the best validation accuracy; deterministic per seed
// (each grid point gets its own child stream, ties go to the earlier point).
inline TrainedProbe train_probe(const Mat& train_x, const std::vector<int>& train_y,
                                const Mat& val_x, const std::vector<int>& val_y, int classes,
                                const std::vector<ProbeGridPoint>& grid, Rng& rng,
                                int epochs = 200) {
  if (classes < 2) throw ConfigError("train_probe: need >= 2 classes");
  bool multi = false;
  {
    std::vector<char> seen(static_cast<size_t>(classes), 0);
    for (int l : train_y) seen[static_cast<size_t>(l)] = 1;
    int distinct = 0;
    for (char s : seen) distinct += s;
    if (distinct < 2) throw ConfigError("train_probe: degenerate single-class labels");
    (void)multi;
  }
  const Mat y = one_hot(train_y, classes);
  TrainedProbe best;
  best.val_score = -1.0;
  for (const auto& gp : grid) {
    Rng child = rng.fork();
    ProbeModel model = fit_probe(train_x, y, gp, false, child, epochs);
    const double score = accuracy(model.predict_class(val_x), val_y);
    if (score > best.val_score) {
      best.model = model;
      best.chosen = gp;
      best.val_score = score;
    }
  }
  return best;
}

// --- metrics ----------------------------------------------------------------

// Macro-averaged average precision; per class, AP is the mean of precision at
// every positive rank (descending scores, ties by lower index first).
inline double mean_average_precision(const Mat& scores, const Mat& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw ShapeError("mAP: shape mismatch");
  double total = 0.0;
  int counted = 0;
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    int positives = 0;
    for (Eigen::Index i = 0; i < labels.rows(); ++i)
      if (labels(i, c) > 0.5) ++positives;
    if (positives == 0) {
      std::cerr << "mean_average_precision: class " << c << " has no positives, skipping\n";
      continue;
    }
    std::vector<Eigen::Index> order(static_cast<size_t>(scores.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return scores(a, c) > scores(b, c);
    });
    double ap = 0.0;
    int hits = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
      if (labels(order[rank], c) > 0.5) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    total += ap / positives;
    ++counted;
  }
  if (counted == 0) throw ConfigError("mAP: no class has positives");
  return total / counted;
}

struct BootstrapResult {
  double metric = 0.0;
  double low = 0.0;
  double high = 0.0;
  double deviation = 0.0;
};

namespace probe_detail {

inline double percentile(std::vector<double> sorted, double p) {
  const double pos = p / 100.0 * (static_cast<double>(sorted.size()) - 1.0);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = static_cast<size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace probe_detail

// Resample item indices with replacement; CI is the empirical 2.5/97.5
// percentile of the per-resample metric, deviation the furthest bound.
inline BootstrapResult bootstrap_ci_indices(size_t n_items,
                                            const std::function<double(const std::vector<size_t>&)>& metric,
                                            int iters, Rng& rng) {
  if (n_items < 2) throw ConfigError("bootstrap: need >= 2 items");
  std::vector<size_t> identity(n_items);
  std::iota(identity.begin(), identity.end(), 0);
  BootstrapResult res;
  res.metric = metric(identity);
  std::vector<double> values;
  values.reserve(static_cast<size_t>(iters));
  std::vector<size_t> draw(n_items);
  for (int it = 0; it < iters; ++it) {
    for (size_t i = 0; i < n_items; ++i) draw[i] = static_cast<size_t>(rng.uniform_int(n_items));
    values.push_back(metric(draw));
  }
  std::sort(values.begin(), values.end());
  res.low = probe_detail::percentile(values, 2.5);
  res.high = probe_detail::percentile(values, 97.5);
  res.deviation = std::max(std::abs(res.metric - res.low), std::abs(res.high - res.metric));
  return res;
}

inline BootstrapResult bootstrap_ci(const std::vector<double>& per_item_outcomes,
                                    const std::function<double(const std::vector<double>&)>& metric,
                                    int iters, Rng& rng) {
  return bootstrap_ci_indices(
      per_item_outcomes.size(),
      [&](const std::vector<size_t>& idx) {
        std::vector<double> resampled(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) resampled[i] = per_item_outcomes[idx[i]];
        return metric(resampled);
      },
      iters, rng);
}

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

// Mean over tasks of clip((metric - mean) / std, -1, 1).
inline double global_score(const std::map<std::string, double>& task_metrics,
                           const std::map<std::string, NormStats>& norm_stats) {
  if (task_metrics.empty()) throw ConfigError("global_score: no tasks");
  double total = 0.0;
  for (const auto& [task, metric] : task_metrics) {
    auto it = norm_stats.find(task);
    if (it == norm_stats.end())
      throw ConfigError("global_score: missing norm stats for task " + task);
    if (it->second.std <= 0.0)
      throw ConfigError("global_score: std must be positive for task " + task);
    total += std::clamp((metric - it->second.mean) / it->second.std, -1.0, 1.0);
  }
  return total / static_cast<double>(task_metrics.size());
}

}  // namespace framemae
