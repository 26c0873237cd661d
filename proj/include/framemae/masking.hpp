#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "framemae/errors.hpp"
#include "framemae/frontend.hpp"
#include "framemae/rng.hpp"

namespace framemae {

// Span mask over frame indices: masked/visible partition [0, total).
struct MaskSpec {
  std::vector<int> masked;   // sorted
  std::vector<int> visible;  // sorted complement
  int total = 0;
  double proportion = 0.0;
  int span = 0;

  int num_masked() const { return static_cast<int>(masked.size()); }
  int num_visible() const { return static_cast<int>(visible.size()); }

  static MaskSpec empty(int total) {
    MaskSpec m;
    m.total = total;
    m.visible.resize(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) m.visible[static_cast<size_t>(i)] = i;
    return m;
  }
};

// Sample ceil(proportion * total / span) span starts without replacement and
// mask [s, s+span) for each, clipped at the end; overlaps collapse. Resamples
// (up to 100 attempts) if the visible set would be empty.
inline MaskSpec sample_mask(int total, double proportion, int span, Rng& rng) {
  if (total <= 0) throw ConfigError("mask total frames must be positive");
  if (proportion <= 0.0 || proportion >= 1.0)
    throw ConfigError("mask proportion must be in (0, 1)");
  if (span < 1 || span > total) throw ConfigError("mask span must be in [1, total]");
  const int n_start = static_cast<int>(std::ceil(proportion * total / span));
  for (int attempt = 0; attempt < 100; ++attempt) {
    const std::vector<int> starts = rng.sample_without_replacement(total, n_start);
    std::vector<char> is_masked(static_cast<size_t>(total), 0);
    for (int s : starts)
      for (int i = s; i < std::min(s + span, total); ++i) is_masked[static_cast<size_t>(i)] = 1;
    MaskSpec m;
    m.total = total;
    m.proportion = proportion;
    m.span = span;
    for (int i = 0; i < total; ++i)
      (is_masked[static_cast<size_t>(i)] ? m.masked : m.visible).push_back(i);
    if (!m.visible.empty()) return m;
  }
  throw NumericError("sample_mask: could not draw a mask with a non-empty visible set");
}

// Restriction to visible rows, original order preserved.
inline Mat gather_visible(const Mat& x, const MaskSpec& m) {
  if (x.rows() != m.total) throw ShapeError("gather_visible: row count != mask total");
  Mat out(static_cast<Eigen::Index>(m.visible.size()), x.cols());
  for (size_t i = 0; i < m.visible.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(m.visible[i]);
  return out;
}

// Expand back to full length: visible rows in order, the shared mask token at
// every masked position.
inline Mat scatter_with_mask_tokens(const Mat& e, const MaskSpec& m,
                                    const Eigen::RowVectorXd& mask_token) {
  if (e.rows() != static_cast<Eigen::Index>(m.visible.size()))
    throw ShapeError("scatter_with_mask_tokens: row count != visible count");
  if (mask_token.cols() != e.cols() && !m.masked.empty())
    throw ShapeError("scatter_with_mask_tokens: mask token dim mismatch");
  Mat out(m.total, e.cols());
  for (size_t i = 0; i < m.visible.size(); ++i)
    out.row(m.visible[i]) = e.row(static_cast<Eigen::Index>(i));
  for (int i : m.masked) out.row(i) = mask_token;
  return out;
}

}  // namespace framemae
