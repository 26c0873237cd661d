#include <doctest.h>

#include "framemae/objective.hpp"
#include "framemae/rng.hpp"

using namespace framemae;

namespace {

TokenTargets random_targets(int q, int total, int classes, Rng& rng) {
  TokenTargets t;
  t.indices.resize(q, total);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < total; ++j)
      t.indices(i, j) = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(classes)));
  return t;
}

MaskSpec mask_of(int total, std::vector<int> masked) {
  MaskSpec m;
  m.total = total;
  m.masked = std::move(masked);
  for (int i = 0; i < total; ++i)
    if (!std::binary_search(m.masked.begin(), m.masked.end(), i)) m.visible.push_back(i);
  return m;
}

Posteriors uniform_posteriors(int q, int total, int classes) {
  Posteriors p;
  for (int i = 0; i < q; ++i)
    p.probs.push_back(Mat::Constant(total, classes, 1.0 / classes));
  return p;
}

LossConfig uniform_gamma(int q, double delta = 0.9) {
  LossConfig cfg;
  cfg.delta = delta;
  cfg.gamma = Eigen::VectorXd::Constant(q, 1.0 / q);
  return cfg;
}

}  // namespace

TEST_CASE("uniform posteriors give exactly log K") {
  Rng rng(1);
  const int q = 3, total = 20, classes = 64;
  const TokenTargets y = random_targets(q, total, classes, rng);
  const MaskSpec m = mask_of(total, {2, 3, 4, 10, 11});
  const Posteriors p = uniform_posteriors(q, total, classes);
  const double loss = weighted_ce(y, p, m, uniform_gamma(q));
  // alpha*|M| + beta*(T-|M|) = delta + (1-delta) = 1, gamma sums to 1
  CHECK(loss == doctest::Approx(std::log(64.0)).epsilon(1e-9));
}

TEST_CASE("log K holds for any delta and any mask") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int classes = 2 + static_cast<int>(rng.uniform_int(100));
    const int total = 5 + static_cast<int>(rng.uniform_int(50));
    const int q = 1 + static_cast<int>(rng.uniform_int(4));
    std::vector<int> masked;
    for (int i = 0; i < total; ++i)
      if (rng.uniform() < 0.5) masked.push_back(i);
    if (masked.empty()) masked.push_back(0);
    const MaskSpec m = mask_of(total, masked);
    const TokenTargets y = random_targets(q, total, classes, rng);
    const double delta = rng.uniform(0.1, 0.99);
    const double loss =
        weighted_ce(y, uniform_posteriors(q, total, classes), m, uniform_gamma(q, delta));
    REQUIRE(loss == doctest::Approx(std::log(classes)).epsilon(1e-9));
  }
}

TEST_CASE("loss matches a from-scratch oracle on random inputs") {
  Rng rng(3);
  const int q = 2, total = 12, classes = 5;
  const TokenTargets y = random_targets(q, total, classes, rng);
  const MaskSpec m = mask_of(total, {0, 1, 5, 6, 7});
  Eigen::VectorXd gamma(2);
  gamma << 0.7, 0.3;
  LossConfig cfg;
  cfg.delta = 0.8;
  cfg.gamma = gamma;
  Posteriors p;
  for (int i = 0; i < q; ++i) {
    Mat probs(total, classes);
    for (int r = 0; r < total; ++r) {
      for (int c = 0; c < classes; ++c) probs(r, c) = rng.uniform(0.01, 1.0);
      probs.row(r) /= probs.row(r).sum();
    }
    p.probs.push_back(std::move(probs));
  }
  // oracle: direct transcription of the weighted sum
  const double alpha = 0.8 / 5.0;
  const double beta = 0.2 / 7.0;
  double want = 0.0;
  for (int i = 0; i < q; ++i) {
    double masked_term = 0.0, visible_term = 0.0;
    for (int t : m.masked)
      masked_term += -std::log(p.probs[static_cast<size_t>(i)](t, y.indices(i, t)) + 1e-12);
    for (int t : m.visible)
      visible_term += -std::log(p.probs[static_cast<size_t>(i)](t, y.indices(i, t)) + 1e-12);
    want += gamma(i) * (alpha * masked_term + beta * visible_term);
  }
  CHECK(weighted_ce(y, p, m, cfg) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("logit-based loss agrees with the posterior-based loss") {
  Rng rng(4);
  const int q = 3, total = 15, classes = 7;
  const TokenTargets y = random_targets(q, total, classes, rng);
  const MaskSpec m = mask_of(total, {1, 2, 3, 9});
  const LossConfig cfg = uniform_gamma(q);
  std::vector<Mat> logits;
  for (int i = 0; i < q; ++i)
    logits.push_back(Mat::NullaryExpr(total, classes, [&]() { return 2.0 * rng.normal(); }));
  const double from_logits = weighted_ce_from_logits(y, logits, m, cfg);
  const double from_probs = weighted_ce(y, posteriors_from_logits(logits), m, cfg);
  CHECK(from_logits == doctest::Approx(from_probs).epsilon(1e-9));
}

TEST_CASE("logit gradient matches finite differences") {
  Rng rng(5);
  const int q = 2, total = 8, classes = 4;
  const TokenTargets y = random_targets(q, total, classes, rng);
  const MaskSpec m = mask_of(total, {0, 3, 4});
  const LossConfig cfg = uniform_gamma(q);
  std::vector<Mat> logits;
  for (int i = 0; i < q; ++i)
    logits.push_back(Mat::NullaryExpr(total, classes, [&]() { return rng.normal(); }));
  std::vector<Mat> dlogits;
  weighted_ce_from_logits(y, logits, m, cfg, &dlogits);
  const double h = 1e-6;
  for (int i = 0; i < q; ++i)
    for (int t = 0; t < total; ++t)
      for (int c = 0; c < classes; ++c) {
        const double saved = logits[static_cast<size_t>(i)](t, c);
        logits[static_cast<size_t>(i)](t, c) = saved + h;
        const double up = weighted_ce_from_logits(y, logits, m, cfg);
        logits[static_cast<size_t>(i)](t, c) = saved - h;
        const double down = weighted_ce_from_logits(y, logits, m, cfg);
        logits[static_cast<size_t>(i)](t, c) = saved;
        const double fd = (up - down) / (2.0 * h);
        REQUIRE(std::abs(fd - dlogits[static_cast<size_t>(i)](t, c)) <
                1e-8 + 1e-6 * std::abs(fd));
      }
}

TEST_CASE("delta shifts weight between regions") {
  Rng rng(6);
  const int q = 1, total = 10, classes = 4;
  const TokenTargets y = random_targets(q, total, classes, rng);
  const MaskSpec m = mask_of(total, {0, 1, 2, 3, 4});
  // posteriors: perfect on masked frames, poor on visible frames
  Posteriors p;
  Mat probs = Mat::Constant(total, classes, 0.01 / 3.0);
  for (int t : m.masked) {
    probs.row(t).setConstant((1.0 - 0.99) / 3.0);
    probs(t, y.indices(0, t)) = 0.99;
  }
  for (int t : m.visible) {
    probs.row(t).setConstant(0.33);
    probs(t, y.indices(0, t)) = 0.01;
    probs.row(t) /= probs.row(t).sum();
  }
  p.probs.push_back(probs);
  // raising delta (more weight on the well-predicted masked region) must
  // lower the loss
  const double lo = weighted_ce(y, p, m, uniform_gamma(1, 0.5));
  const double hi = weighted_ce(y, p, m, uniform_gamma(1, 0.9));
  CHECK(hi < lo);
}

TEST_CASE("full mask drops the unmasked term") {
  Rng rng(7);
  const int total = 6, classes = 3;
  const TokenTargets y = random_targets(1, total, classes, rng);
  std::vector<int> all(total);
  for (int i = 0; i < total; ++i) all[static_cast<size_t>(i)] = i;
  const MaskSpec m = mask_of(total, all);
  const double loss =
      weighted_ce(y, uniform_posteriors(1, total, classes), m, uniform_gamma(1));
  // alpha = delta/T over T frames: total weight delta, not 1
  CHECK(loss == doctest::Approx(0.9 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("empty mask is a configuration error") {
  Rng rng(8);
  const TokenTargets y = random_targets(1, 5, 3, rng);
  const MaskSpec m = MaskSpec::empty(5);
  CHECK_THROWS_AS(weighted_ce(y, uniform_posteriors(1, 5, 3), m, uniform_gamma(1)),
                  ConfigError);
  std::vector<Mat> logits{Mat::Zero(5, 3)};
  CHECK_THROWS_AS(weighted_ce_from_logits(y, logits, m, uniform_gamma(1)), ConfigError);
}

TEST_CASE("shape mismatches are rejected") {
  Rng rng(9);
  const TokenTargets y = random_targets(2, 5, 3, rng);
  const MaskSpec m = mask_of(5, {1});
  CHECK_THROWS_AS(weighted_ce(y, uniform_posteriors(1, 5, 3), m, uniform_gamma(1)),
                  ShapeError);
  CHECK_THROWS_AS(weighted_ce(y, uniform_posteriors(2, 4, 3), m, uniform_gamma(2)),
                  ShapeError);
  CHECK_THROWS_AS(weighted_ce(y, uniform_posteriors(2, 5, 3), m, uniform_gamma(3)),
                  ShapeError);
}

TEST_CASE("masked accuracy counts argmax hits on masked frames only") {
  TokenTargets y;
  y.indices.resize(1, 4);
  y.indices << 0, 1, 2, 0;
  const MaskSpec m = mask_of(4, {0, 1});
  Posteriors p;
  Mat probs(4, 3);
  probs << 0.8, 0.1, 0.1,  // hit (target 0)
      0.6, 0.3, 0.1,       // miss (target 1)
      0.1, 0.1, 0.8,       // visible frame, ignored
      0.1, 0.8, 0.1;       // visible frame, ignored
  p.probs.push_back(probs);
  const Eigen::VectorXd acc = masked_accuracy(y, p, m);
  REQUIRE(acc.size() == 1);
  CHECK(acc(0) == doctest::Approx(0.5));
}
