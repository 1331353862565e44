#pragma once

// Stochastic block model graphs with class-correlated binary features, for
// fixtures and smoke runs.

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "guap/errors.hpp"
#include "guap/graph.hpp"
#include "guap/rng.hpp"

namespace guap {

struct SbmConfig {
  std::vector<Index> block_sizes{100, 100, 100};
  double p_in = 0.05;
  double p_out = 0.005;
  Index feature_dim = 30;
  double feature_p_in = 0.3;   // rate of a class's own feature dimensions
  double feature_p_out = 0.05; // rate of every other dimension
  Index train_per_class = 20;
  Index test_per_class = 30;
  std::uint64_t seed = 0;
};

/// Node v of block c has label c; feature dimension k belongs to class
/// k mod K. Per class, the first train_per_class nodes of a seeded
/// permutation are train and the next test_per_class are test.
inline Graph make_sbm(const SbmConfig& cfg) {
  const int k = static_cast<int>(cfg.block_sizes.size());
  if (k == 0) throw ConfigError("sbm: no blocks");
  std::vector<int> labels;
  for (int c = 0; c < k; ++c) {
    if (cfg.block_sizes[c] < cfg.train_per_class + cfg.test_per_class)
      throw ConfigError("sbm: block smaller than its train+test quota");
    labels.insert(labels.end(), static_cast<std::size_t>(cfg.block_sizes[c]), c);
  }
  const Index n = static_cast<Index>(labels.size());

  std::vector<std::pair<Index, Index>> edges;
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v) {
      const double p = labels[u] == labels[v] ? cfg.p_in : cfg.p_out;
      if (rng::uniform(cfg.seed, 0xed6eULL, u, v) < p) edges.emplace_back(u, v);
    }

  std::vector<Eigen::Triplet<double>> trip;
  for (Index v = 0; v < n; ++v)
    for (Index d = 0; d < cfg.feature_dim; ++d) {
      const double p = static_cast<int>(d % k) == labels[v] ? cfg.feature_p_in : cfg.feature_p_out;
      if (rng::uniform(cfg.seed, 0xfea7ULL, v, d) < p) trip.emplace_back(v, d, 1.0);
    }
  auto x = std::make_shared<SparseMatrix>(n, cfg.feature_dim);
  x->setFromTriplets(trip.begin(), trip.end());

  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(build_adjacency(n, edges));
  g.features = std::move(x);
  g.labels = std::move(labels);
  g.num_classes = k;
  g.split.assign(static_cast<std::size_t>(n), Split::kOther);
  Index offset = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<Index> members(static_cast<std::size_t>(cfg.block_sizes[c]));
    for (Index j = 0; j < cfg.block_sizes[c]; ++j) members[j] = offset + j;
    rng::Stream stream(rng::mix(cfg.seed, 0x5b1170ULL, static_cast<std::uint64_t>(c)));
    rng::shuffle(std::span<Index>(members), stream);
    for (Index j = 0; j < cfg.train_per_class + cfg.test_per_class; ++j)
      g.split[members[j]] = j < cfg.train_per_class ? Split::kTrain : Split::kTest;
    offset += cfg.block_sizes[c];
  }
  return g;
}

}  // namespace guap
