#pragma once

// The patched block adjacency [[A, C], [C^T, B]] and the elementwise
// primitives the patch optimizer applies to it. A stays sparse and shared;
// only the dense border blocks C (n x m) and B (m x m) are ever written.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include "guap/errors.hpp"
#include "guap/graph.hpp"

namespace guap {

class PatchedAdjacency {
 public:
  PatchedAdjacency() = default;

  /// Empty patch: B = 0, C = 0.
  PatchedAdjacency(std::shared_ptr<const SparseMatrix> original, Index m)
      : original_(std::move(original)) {
    if (!original_) throw DimensionError("PatchedAdjacency: null original block");
    border_ = Matrix::Zero(original_->rows(), m);
    patch_block_ = Matrix::Zero(m, m);
  }

  PatchedAdjacency(std::shared_ptr<const SparseMatrix> original, Matrix border, Matrix patch_block)
      : original_(std::move(original)),
        border_(std::move(border)),
        patch_block_(std::move(patch_block)) {
    if (!original_) throw DimensionError("PatchedAdjacency: null original block");
    if (border_.rows() != original_->rows() || border_.cols() != patch_block_.rows() ||
        patch_block_.rows() != patch_block_.cols())
      throw DimensionError("PatchedAdjacency: inconsistent block shapes");
  }

  Index n() const { return original_ ? original_->rows() : 0; }
  Index m() const { return patch_block_.rows(); }
  Index size() const { return n() + m(); }

  const SparseMatrix& original() const { return *original_; }
  const std::shared_ptr<const SparseMatrix>& original_ptr() const { return original_; }
  const Matrix& border() const { return border_; }
  const Matrix& patch_block() const { return patch_block_; }

  // Writable border access for the optimizer; the original block has none.
  Matrix& border() { return border_; }
  Matrix& patch_block() { return patch_block_; }

  /// Raw entry of the full (n+m) x (n+m) matrix.
  double entry(Index r, Index s) const {
    const Index nn = n();
    if (r < nn && s < nn) return original_->coeff(r, s);
    if (r < nn) return border_(r, s - nn);
    if (s < nn) return border_(s, r - nn);
    return patch_block_(r - nn, s - nn);
  }

  bool same_border(const PatchedAdjacency& other) const {
    return border_ == other.border_ && patch_block_ == other.patch_block_;
  }

 private:
  std::shared_ptr<const SparseMatrix> original_;
  Matrix border_;
  Matrix patch_block_;
};

/// The attack matrix P for one target: row and column `target` select every
/// patch position. Never materialized.
struct AttackMask {
  Index target = 0;
  Index n = 0;
  Index m = 0;

  bool flips(Index r, Index s) const {
    return (r == target && s >= n) || (s == target && r >= n);
  }
};

inline AttackMask make_attack_mask(const PatchedAdjacency& adj, Index target) {
  if (target < 0 || target >= adj.n())
    throw InvalidTarget("attack target " + std::to_string(target) + " is not an original node (n=" +
                        std::to_string(adj.n()) + ")");
  return {target, adj.n(), adj.m()};
}

/// In-place flip of the target's connections to every patch node. Applying
/// it twice restores the input exactly, so it doubles as unattack.
inline void flip_in_place(PatchedAdjacency& adj, Index target) {
  const AttackMask mask = make_attack_mask(adj, target);
  auto row = adj.border().row(mask.target);
  row = (1.0 - row.array()).matrix();
}

inline PatchedAdjacency attack_flip(const PatchedAdjacency& adj, Index target) {
  PatchedAdjacency out = adj;
  flip_in_place(out, target);
  return out;
}

/// D^{-1/2} (A_new + I) D^{-1/2} in hybrid form. Degrees come from the
/// (possibly continuous) entries; the self loop keeps every degree >= 1
/// for nonnegative input.
class NormalizedAdjacency {
 public:
  explicit NormalizedAdjacency(PatchedAdjacency adj) : adj_(std::move(adj)) {
    const Index n = adj_.n();
    const Index m = adj_.m();
    degrees_.resize(n + m);
    for (Index r = 0; r < n; ++r) {
      double sum = 1.0;
      for (SparseMatrix::InnerIterator it(adj_.original(), r); it; ++it) sum += it.value();
      degrees_[r] = sum;
    }
    if (m > 0) {
      degrees_.head(n) += adj_.border().rowwise().sum();
      degrees_.tail(m) = adj_.border().colwise().sum().transpose() +
                         adj_.patch_block().rowwise().sum() + Vector::Ones(m);
    }
    inv_sqrt_ = degrees_.array().rsqrt().matrix();
  }

  const PatchedAdjacency& adjacency() const { return adj_; }
  Index size() const { return adj_.size(); }
  const Vector& degrees() const { return degrees_; }
  const Vector& inv_sqrt_degrees() const { return inv_sqrt_; }

  /// Returns Â y for a (n+m) x k dense block.
  Matrix apply(const Matrix& y) const {
    const Index n = adj_.n();
    const Index m = adj_.m();
    if (y.rows() != n + m) throw DimensionError("NormalizedAdjacency::apply: row mismatch");
    const Matrix ys = inv_sqrt_.asDiagonal() * y;
    Matrix out(n + m, y.cols());
    out.topRows(n).noalias() = adj_.original() * ys.topRows(n);
    out.topRows(n) += ys.topRows(n);
    if (m > 0) {
      out.topRows(n).noalias() += adj_.border() * ys.bottomRows(m);
      out.bottomRows(m).noalias() = adj_.border().transpose() * ys.topRows(n);
      out.bottomRows(m).noalias() += adj_.patch_block() * ys.bottomRows(m);
      out.bottomRows(m) += ys.bottomRows(m);
    }
    return inv_sqrt_.asDiagonal() * out;
  }

  double entry(Index r, Index s) const {
    const double raw = adj_.entry(r, s) + (r == s ? 1.0 : 0.0);
    return raw * inv_sqrt_[r] * inv_sqrt_[s];
  }

  /// Column (equivalently row) `i` of Â as a dense vector.
  Vector column(Index i) const {
    const Index n = adj_.n();
    const Index m = adj_.m();
    Vector raw = Vector::Zero(n + m);
    if (i < n) {
      for (SparseMatrix::InnerIterator it(adj_.original(), i); it; ++it) raw[it.col()] = it.value();
      if (m > 0) raw.tail(m) = adj_.border().row(i).transpose();
    } else {
      raw.head(n) = adj_.border().col(i - n);
      raw.tail(m) = adj_.patch_block().col(i - n);
    }
    raw[i] += 1.0;
    return raw.cwiseProduct(inv_sqrt_) * inv_sqrt_[i];
  }

  Matrix dense() const {
    const Index s = size();
    Matrix out(s, s);
    for (Index r = 0; r < s; ++r)
      for (Index c = 0; c < s; ++c) out(r, c) = entry(r, c);
    return out;
  }

 private:
  PatchedAdjacency adj_;
  Vector degrees_;
  Vector inv_sqrt_;
};

inline NormalizedAdjacency normalize(const PatchedAdjacency& adj) { return NormalizedAdjacency(adj); }

inline NormalizedAdjacency normalize(const Graph& g) {
  return NormalizedAdjacency(PatchedAdjacency(g.adjacency, 0));
}

/// Full (n+m)^2 raw matrix. Intended for small instances.
inline Matrix to_dense(const PatchedAdjacency& adj) {
  const Index s = adj.size();
  Matrix out(s, s);
  out.topLeftCorner(adj.n(), adj.n()) = Matrix(adj.original());
  out.topRightCorner(adj.n(), adj.m()) = adj.border();
  out.bottomLeftCorner(adj.m(), adj.n()) = adj.border().transpose();
  out.bottomRightCorner(adj.m(), adj.m()) = adj.patch_block();
  return out;
}

/// Incident-edge weight norms of every patch node (column j of [C; B] with
/// B's diagonal excluded).
inline Vector patch_column_norms(const PatchedAdjacency& adj) {
  const Index m = adj.m();
  Vector norms(m);
  for (Index j = 0; j < m; ++j) {
    const double diag = adj.patch_block()(j, j);
    norms[j] = std::sqrt(adj.border().col(j).squaredNorm() + adj.patch_block().col(j).squaredNorm() -
                         diag * diag);
  }
  return norms;
}

/// Projects each patch node's incident-edge vector onto the L2 ball of the
/// given radius while keeping B symmetric: B is symmetrized first, then
/// entry (j, k) is scaled by min(s_j, s_k) so neither column leaves its ball.
inline void l2_project_patch_columns_in_place(PatchedAdjacency& adj, double radius) {
  if (!(radius > 0.0)) throw InvalidHyperparameter("projection radius must be positive");
  const Index m = adj.m();
  if (m == 0) return;
  Matrix& b = adj.patch_block();
  b = (0.5 * (b + b.transpose())).eval();
  const Vector norms = patch_column_norms(adj);
  Vector scale(m);
  for (Index j = 0; j < m; ++j) scale[j] = norms[j] > radius ? radius / norms[j] : 1.0;
  for (Index j = 0; j < m; ++j) adj.border().col(j) *= scale[j];
  for (Index j = 0; j < m; ++j)
    for (Index k = 0; k < m; ++k)
      if (j != k) b(j, k) *= std::min(scale[j], scale[k]);
}

/// Rescales every nonzero patch incident-edge vector to norm exactly
/// `radius`, with the same symmetric handling of B as the ball projection.
inline void l2_normalize_patch_columns_in_place(PatchedAdjacency& adj, double radius) {
  if (!(radius > 0.0)) throw InvalidHyperparameter("projection radius must be positive");
  const Index m = adj.m();
  if (m == 0) return;
  Matrix& b = adj.patch_block();
  b = (0.5 * (b + b.transpose())).eval();
  const Vector norms = patch_column_norms(adj);
  Vector scale(m);
  for (Index j = 0; j < m; ++j) scale[j] = norms[j] > 0.0 ? radius / norms[j] : 1.0;
  for (Index j = 0; j < m; ++j) adj.border().col(j) *= scale[j];
  for (Index j = 0; j < m; ++j)
    for (Index k = 0; k < m; ++k)
      if (j != k) b(j, k) *= std::min(scale[j], scale[k]);
}

inline PatchedAdjacency l2_project_patch_columns(const PatchedAdjacency& adj, double radius) {
  PatchedAdjacency out = adj;
  l2_project_patch_columns_in_place(out, radius);
  return out;
}

inline void clip01_in_place(PatchedAdjacency& adj) {
  adj.border() = adj.border().cwiseMax(0.0).cwiseMin(1.0);
  adj.patch_block() = adj.patch_block().cwiseMax(0.0).cwiseMin(1.0);
}

inline void zero_patch_diagonal_in_place(PatchedAdjacency& adj) {
  adj.patch_block().diagonal().setZero();
}

inline PatchedAdjacency clip01_and_zero_diag(const PatchedAdjacency& adj) {
  PatchedAdjacency out = adj;
  clip01_in_place(out);
  zero_patch_diagonal_in_place(out);
  return out;
}

/// Border entries strictly above `threshold` become 1, the rest 0.
inline void binarize_in_place(PatchedAdjacency& adj, double threshold = 0.5) {
  auto step = [threshold](double v) { return v > threshold ? 1.0 : 0.0; };
  adj.border() = adj.border().unaryExpr(step);
  adj.patch_block() = adj.patch_block().unaryExpr(step);
}

inline PatchedAdjacency binarize(const PatchedAdjacency& adj, double threshold = 0.5) {
  PatchedAdjacency out = adj;
  binarize_in_place(out, threshold);
  return out;
}

/// Undirected patch edges of a binary patch: every C entry is one edge, each
/// off-diagonal B pair is one edge.
inline Index patch_edge_count(const PatchedAdjacency& adj) {
  Index count = 0;
  for (Index r = 0; r < adj.border().rows(); ++r)
    for (Index j = 0; j < adj.border().cols(); ++j)
      if (adj.border()(r, j) != 0.0) ++count;
  for (Index j = 0; j < adj.m(); ++j)
    for (Index k = j + 1; k < adj.m(); ++k)
      if (adj.patch_block()(j, k) != 0.0) ++count;
  return count;
}

}  // namespace guap
