#pragma once

// Patch evaluation, the ablation baselines, hyperparameter sweeps and the
// retrained-victim transfer check.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "guap/artifact.hpp"
#include "guap/attack.hpp"
#include "guap/errors.hpp"
#include "guap/featgen.hpp"
#include "guap/gcn.hpp"
#include "guap/graph.hpp"
#include "guap/patched_adjacency.hpp"
#include "guap/rng.hpp"

namespace guap {

namespace detail {

inline EvalReport evaluate_blocks(const Graph& g, const GcnParams& params, const Matrix& x_patch,
                                  const Matrix& border, const Matrix& patch_block, std::string method,
                                  std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const Index m = patch_block.rows();
  if (border.rows() != g.num_nodes() || border.cols() != m || patch_block.cols() != m || x_patch.rows() != m)
    throw ValidationError("patch blocks do not match the graph (n=" + std::to_string(g.num_nodes()) + ")");
  if (m > 0 && x_patch.cols() != g.feature_dim())
    throw ValidationError("patch features have " + std::to_string(x_patch.cols()) + " columns, graph has " +
                          std::to_string(g.feature_dim()));
  if (params.input_dim() != g.feature_dim()) throw ValidationError("model input width does not match graph features");

  const auto train = g.train_nodes();
  const auto test = g.test_nodes();
  if (test.empty()) throw UndefinedRate("evaluation needs a nonempty test split");

  const PatchedAdjacency adj(g.adjacency, border, patch_block);
  const PatchedGcn model(g, params, x_patch);
  const Matrix z_clean = clean_probabilities(g, params);
  const std::vector<int> clean = predict_labels(z_clean);

  EvalReport r;
  r.method = std::move(method);
  r.seed = seed;
  r.m = m;
  r.patch_edges = patch_edge_count(adj);
  r.acc_clean = accuracy(z_clean, g.labels, test);
  r.acc_patched = accuracy(model.forward(adj).probs.topRows(g.num_nodes()), g.labels, test);
  r.delta_acc = r.acc_patched - r.acc_clean;
  r.train_outcomes = attack_outcomes(model, adj, train, clean);
  r.test_outcomes = attack_outcomes(model, adj, test, clean);
  auto rate = [](const std::vector<AttackOutcome>& os) {
    if (os.empty()) return 0.0;
    return static_cast<double>(std::count_if(os.begin(), os.end(), [](const auto& o) { return o.success(); })) /
           static_cast<double>(os.size());
  };
  r.asr_train = rate(r.train_outcomes);
  r.asr_test = rate(r.test_outcomes);
  if (r.acc_clean < 0.5)
    r.warnings.push_back("clean accuracy " + std::to_string(r.acc_clean) + " is below 0.5; ASR is not meaningful");
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace detail

/// ASR on the train and test splits, and test accuracy with the patch
/// present but no target attacked.
inline EvalReport evaluate_patch(const PatchArtifact& artifact, const Graph& g, const GcnParams& params) {
  if (artifact.n != g.num_nodes())
    throw ValidationError("artifact built for n=" + std::to_string(artifact.n) + " but graph has n=" +
                          std::to_string(g.num_nodes()));
  EvalReport r = detail::evaluate_blocks(g, params, artifact.x_patch, artifact.border, artifact.patch_block, "guap",
                                         artifact.seed);
  r.dataset = artifact.dataset;
  return r;
}

/// m patch nodes with generated features and no edges at all.
inline EvalReport baseline_no_edges(const Graph& g, const GcnParams& params, Index m, std::uint64_t seed) {
  if (m < 0) throw ConfigError("baseline: patch size must be nonnegative");
  const Matrix x = sample_patch_features(fit_feature_stats(*g.features), m, seed);
  return detail::evaluate_blocks(g, params, x, Matrix::Zero(g.num_nodes(), m), Matrix::Zero(m, m), "no-edges", seed);
}

/// Edge probability whose expected undirected patch edge count equals
/// `edges`: edges / (n m + m (m - 1) / 2).
inline double calibrated_edge_probability(Index edges, Index n, Index m) {
  const double positions = static_cast<double>(n) * static_cast<double>(m) +
                           0.5 * static_cast<double>(m) * static_cast<double>(m - 1);
  if (positions <= 0.0) return 0.0;
  return std::clamp(static_cast<double>(edges) / positions, 0.0, 1.0);
}

/// Every border and off-diagonal patch position is an edge independently
/// with probability `prob`.
inline EvalReport baseline_random_edges(const Graph& g, const GcnParams& params, Index m, double prob,
                                        std::uint64_t seed) {
  if (m < 0) throw ConfigError("baseline: patch size must be nonnegative");
  if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidHyperparameter("edge probability must lie in [0, 1]");
  const Index n = g.num_nodes();
  const Matrix x = sample_patch_features(fit_feature_stats(*g.features), m, seed);
  Matrix c(n, m);
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < m; ++j) c(r, j) = rng::uniform(seed, 0xc0ffeeULL, r, j) < prob ? 1.0 : 0.0;
  Matrix b = Matrix::Zero(m, m);
  for (Index j = 0; j < m; ++j)
    for (Index k = j + 1; k < m; ++k) b(j, k) = b(k, j) = rng::uniform(seed, 0xb10cULL, j, k) < prob ? 1.0 : 0.0;
  return detail::evaluate_blocks(g, params, x, c, b, "random-edges", seed);
}

/// The artifact's B and C with patch features redrawn from its stored
/// statistics under `new_seed`.
inline EvalReport regenerate_features_eval(const PatchArtifact& artifact, const Graph& g, const GcnParams& params,
                                           std::uint64_t new_seed) {
  if (artifact.stats.mean.size() != g.feature_dim())
    throw ValidationError("artifact feature statistics do not match the graph");
  const Matrix x = sample_patch_features(artifact.stats, artifact.m(), new_seed);
  EvalReport r = detail::evaluate_blocks(g, params, x, artifact.border, artifact.patch_block, "regenerated", new_seed);
  r.dataset = artifact.dataset;
  return r;
}

/// Retrains the victim from `new_seed` and evaluates the fixed artifact
/// against it.
inline EvalReport transfer_retrain_check(const PatchArtifact& artifact, const Graph& g, TrainConfig cfg,
                                         std::uint64_t new_seed) {
  cfg.seed = new_seed;
  const GcnParams retrained = train(g, cfg);
  EvalReport r = evaluate_patch(artifact, g, retrained);
  r.method = "transfer";
  r.seed = new_seed;
  return r;
}

enum class SweepAxis { kPatchFraction, kRadius, kSampleRate };

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kPatchFraction: return "patch_fraction";
    case SweepAxis::kRadius: return "radius";
    case SweepAxis::kSampleRate: return "sample_rate";
  }
  return "?";
}

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "patch_fraction" || s == "patch-frac") return SweepAxis::kPatchFraction;
  if (s == "radius") return SweepAxis::kRadius;
  if (s == "sample_rate" || s == "sample-rate") return SweepAxis::kSampleRate;
  throw ConfigError("unknown sweep axis '" + s + "' (patch_fraction, radius, sample_rate)");
}

inline AttackHyper with_axis(AttackHyper h, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::kPatchFraction:
      h.patch_fraction = value;
      h.patch_nodes.reset();
      break;
    case SweepAxis::kRadius: h.radius = value; break;
    case SweepAxis::kSampleRate: h.sample_rate = value; break;
  }
  return h;
}

/// One patch run per (value, seed), averaged per value. Runs execute on up
/// to `workers` threads; the table does not depend on the worker count.
inline std::vector<SweepRow> sweep(const Graph& g, const GcnParams& params, const AttackHyper& hyper, SweepAxis axis,
                                   const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
                                   unsigned workers = 1) {
  if (values.empty()) throw ConfigError("sweep: no values");
  if (seeds.empty()) throw ConfigError("sweep: no seeds");
  for (double v : values) with_axis(hyper, axis, v).validate();

  struct Run {
    EvalReport report;
    double igp = 0.0;
  };
  const std::size_t total = values.size() * seeds.size();
  std::vector<Run> runs(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      try {
        const AttackHyper h = with_axis(hyper, axis, values[k / seeds.size()]);
        const PatchArtifact art = generate_patch(g, params, h, seeds[k % seeds.size()]);
        runs[k].report = evaluate_patch(art, g, params);
        for (const auto& e : art.trace) runs[k].igp += static_cast<double>(e.igp_invocations);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(total)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < count; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<SweepRow> rows;
  for (std::size_t v = 0; v < values.size(); ++v) {
    SweepRow row;
    row.axis = to_string(axis);
    row.value = values[v];
    row.runs = static_cast<int>(seeds.size());
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const Run& run = runs[v * seeds.size() + s];
      row.asr_train += run.report.asr_train;
      row.asr_test += run.report.asr_test;
      row.delta_acc += run.report.delta_acc;
      row.patch_edges += static_cast<double>(run.report.patch_edges);
      row.igp_invocations += run.igp;
    }
    const double inv = 1.0 / static_cast<double>(seeds.size());
    row.asr_train *= inv;
    row.asr_test *= inv;
    row.delta_acc *= inv;
    row.patch_edges *= inv;
    row.igp_invocations *= inv;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace guap
