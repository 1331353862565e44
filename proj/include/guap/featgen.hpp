#pragma once

// Patch-node features: an independent normal fit per feature dimension,
// thresholded at 0.5 when the observed dimension values are all binary.

#include <cmath>
#include <cstdint>
#include <string>

#include "guap/errors.hpp"
#include "guap/graph.hpp"
#include "guap/rng.hpp"

namespace guap {

struct FeatureStats {
  Vector mean;
  Vector variance;  // population variance
  bool binary = false;

  Index dim() const { return mean.size(); }
};

inline FeatureStats fit_feature_stats(const SparseMatrix& x) {
  const Index n = x.rows();
  if (n < 1) throw EmptyGraph("fit_feature_stats: no rows");
  const Index d = x.cols();
  Vector sum = Vector::Zero(d);
  Vector sum_sq = Vector::Zero(d);
  bool binary = true;
  for (Index r = 0; r < n; ++r) {
    for (SparseMatrix::InnerIterator it(x, r); it; ++it) {
      sum[it.col()] += it.value();
      sum_sq[it.col()] += it.value() * it.value();
      if (it.value() != 0.0 && it.value() != 1.0) binary = false;
    }
  }
  FeatureStats s;
  s.mean = sum / static_cast<double>(n);
  s.variance = (sum_sq / static_cast<double>(n) - s.mean.cwiseAbs2()).cwiseMax(0.0);
  s.binary = binary;
  return s;
}

inline FeatureStats fit_feature_stats(const Matrix& x) {
  return fit_feature_stats(SparseMatrix(x.sparseView()));
}

/// m x d draws. Entry (row, dim) depends only on (seed, dim, row).
inline Matrix sample_patch_features(const FeatureStats& stats, Index m, std::uint64_t seed) {
  if (m < 0) throw InvalidHyperparameter("sample_patch_features: negative patch size");
  const Index d = stats.dim();
  Matrix out(m, d);
  for (Index k = 0; k < d; ++k) {
    const double sd = std::sqrt(stats.variance[k]);
    for (Index r = 0; r < m; ++r) {
      double v = stats.mean[k];
      if (sd > 0.0) v += sd * rng::normal(seed, 0x5eedfea7ULL, k, r);
      if (stats.binary) v = v >= 0.5 ? 1.0 : 0.0;
      out(r, k) = v;
    }
  }
  return out;
}

/// Probability that a thresholded draw from N(p, p(1-p)) is 1.
inline double binarized_one_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("binarized_one_probability: p must lie in (0, 1)");
  return 0.5 * std::erfc((0.5 - p) / std::sqrt(2.0 * p * (1.0 - p)));
}

}  // namespace guap
