#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "guap/errors.hpp"
#include "guap/featgen.hpp"
#include "guap/graph.hpp"
#include "guap/patched_adjacency.hpp"

namespace guap {

/// How the outer loop bounds each patch node's incident-edge vector.
enum class Projection {
  kBall,    // shrink to norm radius when longer
  kSphere,  // rescale every nonzero vector to norm radius
};

/// Where the deepfool step of the inner loop is linearized.
enum class DeepfoolPoint {
  kInput,    // the attacked matrix handed to the inner loop
  kCurrent,  // the current perturbed matrix clip01(attacked + delta)
};

/// Hyperparameters of the patch optimizer. Defaults are the published
/// settings for the outer and inner loops.
struct AttackHyper {
  int max_epoch = 50;
  int max_iter = 30;
  double radius = 10.0;
  double overshoot = 0.02;
  double step = 10.0;
  double sample_rate = 1.0;
  double binarize_threshold = 0.5;
  double patch_fraction = 0.01;
  std::optional<Index> patch_nodes;  // explicit m; overrides patch_fraction
  bool clip = true;                  // clip to [0, 1] after each projection
  bool resume_from_binarized = false; // next epoch starts from the binarized patch
  Projection projection = Projection::kSphere;
  DeepfoolPoint deepfool_point = DeepfoolPoint::kInput;
  bool deepfool_patch_norm = true;   // deepfool step sized over the writable (patch) entries only

  void validate() const {
    if (max_epoch <= 0 || max_iter <= 0) throw InvalidHyperparameter("epoch/iteration counts must be positive");
    if (!(radius > 0.0)) throw InvalidHyperparameter("radius must be positive");
    if (!(overshoot >= 0.0)) throw InvalidHyperparameter("overshoot must be nonnegative");
    if (!(step > 0.0)) throw InvalidHyperparameter("step must be positive");
    if (!(sample_rate > 0.0 && sample_rate <= 1.0)) throw InvalidHyperparameter("sample_rate must lie in (0, 1]");
    if (!(patch_fraction >= 0.0)) throw InvalidHyperparameter("patch_fraction must be nonnegative");
    if (patch_nodes && *patch_nodes < 0) throw InvalidHyperparameter("patch_nodes must be nonnegative");
  }

  /// Patch size for a graph with n original nodes (fraction rounded to
  /// nearest). A positive fraction that rounds to zero nodes is rejected.
  Index patch_size(Index n) const {
    if (patch_nodes) return *patch_nodes;
    const Index m = static_cast<Index>(std::llround(patch_fraction * static_cast<double>(n)));
    if (m == 0 && patch_fraction > 0.0)
      throw ConfigError("patch_fraction " + std::to_string(patch_fraction) + " yields zero patch nodes for n=" +
                        std::to_string(n));
    return m;
  }
};

inline const char* to_string(Projection p) { return p == Projection::kBall ? "ball" : "sphere"; }
inline const char* to_string(DeepfoolPoint p) { return p == DeepfoolPoint::kInput ? "input" : "current"; }

inline Projection parse_projection(const std::string& s) {
  if (s == "ball") return Projection::kBall;
  if (s == "sphere") return Projection::kSphere;
  throw ConfigError("unknown projection '" + s + "' (ball, sphere)");
}

inline DeepfoolPoint parse_deepfool_point(const std::string& s) {
  if (s == "input") return DeepfoolPoint::kInput;
  if (s == "current") return DeepfoolPoint::kCurrent;
  throw ConfigError("unknown deepfool point '" + s + "' (input, current)");
}

/// Per-epoch bookkeeping of the outer loop.
struct EpochRecord {
  int epoch = 0;
  double asr_train = 0.0;
  Index targets_visited = 0;
  Index igp_invocations = 0;
  Index igp_iterations = 0;
  Index igp_successes = 0;
  Index degenerate_skips = 0;
  Index patch_edges = 0;

  bool operator==(const EpochRecord&) const = default;
};

/// Result of a patch optimization run: the binarized patch of the best
/// epoch plus everything needed to regenerate or audit it.
struct PatchArtifact {
  std::string dataset;
  Index n = 0;
  Matrix x_patch;      // m x d
  Matrix border;       // C, n x m
  Matrix patch_block;  // B, m x m
  FeatureStats stats;
  AttackHyper hyper;
  std::vector<EpochRecord> trace;
  int best_epoch = 0;
  double best_asr = 0.0;
  std::uint64_t seed = 0;

  Index m() const { return patch_block.rows(); }

  PatchedAdjacency adjacency(const Graph& g) const {
    if (g.num_nodes() != n || border.rows() != n)
      throw ValidationError("artifact built for n=" + std::to_string(n) + " but graph has n=" +
                            std::to_string(g.num_nodes()));
    if (x_patch.rows() != m() || (m() > 0 && x_patch.cols() != g.feature_dim()))
      throw ValidationError("artifact patch features do not match graph feature dimension");
    return PatchedAdjacency(g.adjacency, border, patch_block);
  }
};

/// Per-node result of attacking with a fixed patch.
struct AttackOutcome {
  Index node = 0;
  int clean_pred = 0;
  int attacked_pred = 0;
  bool success() const { return attacked_pred != clean_pred; }
  bool operator==(const AttackOutcome&) const = default;
};

/// Evaluation of one patch against one victim model.
struct EvalReport {
  std::string dataset;
  std::string method = "guap";  // guap | no-edges | random-edges | regenerated | transfer
  Index m = 0;
  Index patch_edges = 0;
  double asr_train = 0.0;
  double asr_test = 0.0;
  double acc_clean = 0.0;
  double acc_patched = 0.0;
  double delta_acc = 0.0;  // acc_patched - acc_clean
  std::vector<AttackOutcome> train_outcomes;
  std::vector<AttackOutcome> test_outcomes;
  std::vector<std::pair<std::string, std::string>> config;  // echo of the run configuration
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;  // kept out of the primary report file

  bool operator==(const EvalReport&) const = default;
};

/// One sweep point, averaged over seeds.
struct SweepRow {
  std::string axis;
  double value = 0.0;
  int runs = 0;
  double asr_train = 0.0;
  double asr_test = 0.0;
  double delta_acc = 0.0;
  double patch_edges = 0.0;
  double igp_invocations = 0.0;  // summed over epochs, averaged over seeds

  bool operator==(const SweepRow&) const = default;
};

inline bool operator==(const AttackHyper& a, const AttackHyper& b) {
  return a.max_epoch == b.max_epoch && a.max_iter == b.max_iter && a.radius == b.radius &&
         a.overshoot == b.overshoot && a.step == b.step && a.sample_rate == b.sample_rate &&
         a.binarize_threshold == b.binarize_threshold && a.patch_fraction == b.patch_fraction &&
         a.patch_nodes == b.patch_nodes && a.clip == b.clip && a.resume_from_binarized == b.resume_from_binarized &&
         a.projection == b.projection && a.deepfool_point == b.deepfool_point &&
         a.deepfool_patch_norm == b.deepfool_patch_norm;
}

inline bool operator==(const FeatureStats& a, const FeatureStats& b) {
  return a.binary == b.binary && a.mean.size() == b.mean.size() && a.variance.size() == b.variance.size() &&
         a.mean == b.mean && a.variance == b.variance;
}

namespace detail {
inline bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}
}  // namespace detail

inline bool operator==(const PatchArtifact& a, const PatchArtifact& b) {
  return a.dataset == b.dataset && a.n == b.n && detail::same_matrix(a.x_patch, b.x_patch) &&
         detail::same_matrix(a.border, b.border) && detail::same_matrix(a.patch_block, b.patch_block) &&
         a.stats == b.stats && a.hyper == b.hyper && a.trace == b.trace && a.best_epoch == b.best_epoch &&
         a.best_asr == b.best_asr && a.seed == b.seed;
}

}  // namespace guap
