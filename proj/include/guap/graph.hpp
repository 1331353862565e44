#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "guap/errors.hpp"

namespace guap {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Split : std::uint8_t { kTrain, kTest, kOther };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kOther: return "other";
  }
  return "other";
}

/// Undirected, unweighted attributed graph with a node-classification split.
/// The adjacency is shared so patched views can reference it without copies.
struct Graph {
  std::shared_ptr<const SparseMatrix> adjacency;
  std::shared_ptr<const SparseMatrix> features;  // n x d
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<Split> split;

  Index num_nodes() const { return adjacency ? adjacency->rows() : 0; }
  Index feature_dim() const { return features ? features->cols() : 0; }

  /// Undirected edge count (each stored pair counted once).
  Index num_edges() const { return adjacency ? adjacency->nonZeros() / 2 : 0; }

  std::vector<Index> nodes_in(Split s) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(static_cast<Index>(i));
    return out;
  }
  std::vector<Index> train_nodes() const { return nodes_in(Split::kTrain); }
  std::vector<Index> test_nodes() const { return nodes_in(Split::kTest); }
};

/// Builds a symmetric binary adjacency from an undirected edge list.
/// Duplicates and reversed duplicates collapse; self loops are dropped and
/// the distinct looped nodes counted in `dropped_self_loops` when provided.
inline SparseMatrix build_adjacency(Index n, const std::vector<std::pair<Index, Index>>& edges,
                                    Index* dropped_self_loops = nullptr) {
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(edges.size() * 2);
  std::vector<Index> loops;
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw IntegrityError("edge endpoint out of range: " + std::to_string(u) + " " +
                           std::to_string(v));
    if (u == v) {
      loops.push_back(u);
      continue;
    }
    pairs.emplace_back(u, v);
    pairs.emplace_back(v, u);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(pairs.size());
  for (auto [u, v] : pairs) triplets.emplace_back(u, v, 1.0);
  SparseMatrix a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  std::sort(loops.begin(), loops.end());
  if (dropped_self_loops)
    *dropped_self_loops = static_cast<Index>(std::unique(loops.begin(), loops.end()) - loops.begin());
  return a;
}

/// Checks the structural invariants of a Graph; throws ValidationError.
inline void validate(const Graph& g) {
  if (!g.adjacency || !g.features) throw ValidationError("graph is missing adjacency or features");
  const SparseMatrix& a = *g.adjacency;
  const Index n = a.rows();
  if (a.cols() != n) throw ValidationError("adjacency is not square");
  if (g.features->rows() != n) throw ValidationError("feature rows do not match node count");
  if (static_cast<Index>(g.labels.size()) != n || static_cast<Index>(g.split.size()) != n)
    throw ValidationError("labels/split length does not match node count");
  for (Index r = 0; r < n; ++r) {
    for (SparseMatrix::InnerIterator it(a, r); it; ++it) {
      if (it.col() == r) throw ValidationError("adjacency has a self loop at " + std::to_string(r));
      if (it.value() != 1.0) throw ValidationError("adjacency is not binary");
      if (a.coeff(it.col(), r) != 1.0) throw ValidationError("adjacency is not symmetric");
    }
  }
  for (int y : g.labels)
    if (y < 0 || y >= g.num_classes) throw ValidationError("label out of range");
}

/// Connected components by BFS; returns per-node component ids numbered in
/// order of each component's smallest node.
inline std::vector<Index> connected_components(const SparseMatrix& a, Index* count = nullptr) {
  const Index n = a.rows();
  std::vector<Index> comp(static_cast<std::size_t>(n), -1);
  std::vector<Index> queue;
  Index next = 0;
  for (Index s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    queue.assign(1, s);
    comp[s] = next;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      for (SparseMatrix::InnerIterator it(a, queue[h]); it; ++it) {
        if (comp[it.col()] < 0) {
          comp[it.col()] = next;
          queue.push_back(it.col());
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

/// Induced subgraph on `keep` (sorted ascending); node order preserved.
inline Graph induced_subgraph(const Graph& g, const std::vector<Index>& keep) {
  const Index n = g.num_nodes();
  std::vector<Index> remap(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) remap[keep[k]] = static_cast<Index>(k);
  const Index sub_n = static_cast<Index>(keep.size());

  std::vector<Eigen::Triplet<double>> adj_t;
  for (Index old : keep)
    for (SparseMatrix::InnerIterator it(*g.adjacency, old); it; ++it)
      if (remap[it.col()] >= 0) adj_t.emplace_back(remap[old], remap[it.col()], it.value());
  auto adj = std::make_shared<SparseMatrix>(sub_n, sub_n);
  adj->setFromTriplets(adj_t.begin(), adj_t.end());
  adj->makeCompressed();

  std::vector<Eigen::Triplet<double>> feat_t;
  for (Index old : keep)
    for (SparseMatrix::InnerIterator it(*g.features, old); it; ++it)
      feat_t.emplace_back(remap[old], it.col(), it.value());
  auto feat = std::make_shared<SparseMatrix>(sub_n, g.features->cols());
  feat->setFromTriplets(feat_t.begin(), feat_t.end());
  feat->makeCompressed();

  Graph out;
  out.adjacency = std::move(adj);
  out.features = std::move(feat);
  out.num_classes = g.num_classes;
  for (Index old : keep) {
    out.labels.push_back(g.labels[old]);
    out.split.push_back(g.split[old]);
  }
  return out;
}

/// Induced subgraph on the largest connected component. Size ties go to the
/// component holding the smallest node index.
inline Graph largest_connected_component(const Graph& g) {
  const Index n = g.num_nodes();
  if (n == 0) throw EmptyGraph("largest_connected_component: graph has no nodes");
  Index count = 0;
  const auto comp = connected_components(*g.adjacency, &count);
  std::vector<Index> sizes(static_cast<std::size_t>(count), 0);
  for (Index c : comp) ++sizes[c];
  // Components are numbered by smallest member, so the first maximum wins ties.
  const Index best = std::max_element(sizes.begin(), sizes.end()) - sizes.begin();
  if (sizes[best] == n) return g;
  std::vector<Index> keep;
  for (Index i = 0; i < n; ++i)
    if (comp[i] == best) keep.push_back(i);
  return induced_subgraph(g, keep);
}

}  // namespace guap
