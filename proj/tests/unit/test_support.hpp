#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "guap/gcn.hpp"
#include "guap/graph.hpp"
#include "guap/patched_adjacency.hpp"

namespace guap::testing {

/// A small random patched instance: graph, continuous patch, features and
/// weights, plus the dense raw matrix for the reference oracle.
struct RandomInstance {
  Graph graph;
  PatchedAdjacency adj;
  Matrix x_patch;
  GcnParams params;
  Eigen::MatrixXd raw;   // (n+m)^2
  Eigen::MatrixXd x_all; // (n+m) x d
};

inline RandomInstance random_instance(std::uint64_t seed, Index n, Index m, Index d, Index hidden, int k,
                                      double edge_prob = 0.4) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (u01(gen) < edge_prob) edges.emplace_back(i, j);

  RandomInstance inst;
  inst.graph.adjacency = std::make_shared<SparseMatrix>(build_adjacency(n, edges));
  Matrix x(n, d);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < d; ++c) x(r, c) = u01(gen);
  inst.graph.features = std::make_shared<SparseMatrix>(x.sparseView());
  inst.graph.num_classes = k;
  for (Index i = 0; i < n; ++i) {
    inst.graph.labels.push_back(static_cast<int>(gen() % static_cast<std::uint64_t>(k)));
    inst.graph.split.push_back(i % 3 == 2 ? Split::kTest : Split::kTrain);
  }

  Matrix border(n, m);
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < m; ++j) border(r, j) = u01(gen);
  Matrix block = Matrix::Zero(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = a + 1; b < m; ++b) block(a, b) = block(b, a) = u01(gen);
  inst.adj = PatchedAdjacency(inst.graph.adjacency, border, block);

  inst.x_patch.resize(m, d);
  for (Index r = 0; r < m; ++r)
    for (Index c = 0; c < d; ++c) inst.x_patch(r, c) = u01(gen);

  inst.params.w0.resize(d, hidden);
  inst.params.w1.resize(hidden, k);
  for (Index r = 0; r < d; ++r)
    for (Index c = 0; c < hidden; ++c) inst.params.w0(r, c) = gauss(gen);
  for (Index r = 0; r < hidden; ++r)
    for (Index c = 0; c < k; ++c) inst.params.w1(r, c) = gauss(gen);

  inst.raw = to_dense(inst.adj);
  inst.x_all.resize(n + m, d);
  inst.x_all.topRows(n) = x;
  inst.x_all.bottomRows(m) = inst.x_patch;
  return inst;
}

}  // namespace guap::testing
