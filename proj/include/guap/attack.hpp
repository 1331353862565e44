#pragma once

// Patch optimization: the per-target perturbation loop (deepfool step on the
// target's patch connections, then descent on everyone else's loss) and the
// outer loop that folds those perturbations into one universal patch.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "guap/artifact.hpp"
#include "guap/errors.hpp"
#include "guap/featgen.hpp"
#include "guap/gcn.hpp"
#include "guap/patched_adjacency.hpp"
#include "guap/rng.hpp"

namespace guap {

/// Symmetric perturbation supported on the border blocks only; the n x n
/// block of the perturbation is identically zero by representation.
struct IgpResult {
  Matrix delta_border;  // applies to (r, n+j) and (n+j, r)
  Matrix delta_patch;
  int iterations = 0;
  bool success = false;
};

namespace detail {

inline PatchedAdjacency perturbed_clipped(const PatchedAdjacency& base, const Matrix& d_border,
                                          const Matrix& d_patch) {
  PatchedAdjacency e = base;
  e.border() = (e.border() + d_border).cwiseMax(0.0).cwiseMin(1.0);
  e.patch_block() = (e.patch_block() + d_patch).cwiseMax(0.0).cwiseMin(1.0);
  return e;
}

}  // namespace detail

/// Closest-boundary step for target i from its output Jacobian: returns the
/// minimal linearized perturbation of row i toward the nearest other class.
/// With `fixed` > 0 the first `fixed` entries are treated as immovable: the
/// step is computed over the remaining entries only and is zero on the rest.
inline Vector deepfool_step(const Eigen::RowVectorXd& probs_i, const Matrix& jacobian, int pred, Index fixed = 0) {
  const Index k = jacobian.rows();
  if (fixed < 0 || fixed > jacobian.cols()) throw DimensionError("deepfool_step: fixed prefix out of range");
  if (pred < 0 || pred >= k || probs_i.size() != k) throw DimensionError("deepfool_step: class index out of range");
  auto diff = [&](Index c) {
    Vector dw = (jacobian.row(c) - jacobian.row(pred)).transpose();
    dw.head(fixed).setZero();
    return dw;
  };
  double best_ratio = std::numeric_limits<double>::infinity();
  Index best = -1;
  for (Index c = 0; c < k; ++c) {
    if (c == pred) continue;
    const double norm = diff(c).norm();
    if (!(norm > 0.0)) continue;
    const double ratio = std::abs(probs_i[c] - probs_i[pred]) / norm;
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = c;
    }
  }
  if (best < 0) throw DegenerateGradient("all class gradient differences vanish");
  const Vector dw = diff(best);
  const double df = std::abs(probs_i[best] - probs_i[pred]);
  return (df / dw.squaredNorm()) * dw;
}

/// Iterative graph perturbation for one target on its attacked adjacency.
/// `clean_pred` is the target's prediction on the unpatched graph. The loop
/// guard is evaluated on the current perturbed matrix clip01(attacked +
/// delta); the deepfool step is linearized at `hyper.deepfool_point`.
inline IgpResult igp(const PatchedGcn& model, const PatchedAdjacency& attacked, Index i, int clean_pred,
                     const AttackHyper& hyper) {
  const Index n = attacked.n();
  const Index m = attacked.m();
  if (i < 0 || i >= n) throw InvalidTarget("igp target must be an original node");

  IgpResult r;
  r.delta_border = Matrix::Zero(n, m);
  r.delta_patch = Matrix::Zero(m, m);

  ForwardPass fp = model.forward(attacked);
  std::optional<Vector> v_input;
  while (fp.predicted(i) == clean_pred && r.iterations < hyper.max_iter) {
    // Boundary step on row/column i, restricted to the patch positions.
    Vector v;
    if (hyper.deepfool_point == DeepfoolPoint::kInput && v_input) {
      v = *v_input;
    } else {
      const Matrix jac = model.output_jacobian_wrt_adj_row(fp, i);
      v = deepfool_step(fp.probs.row(i), jac, clean_pred, hyper.deepfool_patch_norm ? n : 0);
      if (hyper.deepfool_point == DeepfoolPoint::kInput) v_input = v;
    }
    r.delta_border.row(i) += (1.0 + hyper.overshoot) * v.tail(m).transpose();

    // Descent on the loss of every other training node.
    const ForwardPass fp_e = model.forward(detail::perturbed_clipped(attacked, r.delta_border, r.delta_patch));
    BorderGradient grad = model.loss_grad_wrt_patch_blocks(fp_e, i);
    grad.upper.row(i).setZero();
    grad.lower.row(i).setZero();
    r.delta_border -= hyper.step * 0.5 * (grad.upper + grad.lower);
    r.delta_patch -= hyper.step * 0.5 * (grad.patch + grad.patch.transpose());
    ++r.iterations;

    fp = model.forward(detail::perturbed_clipped(attacked, r.delta_border, r.delta_patch));
  }
  r.success = fp.predicted(i) != clean_pred;
  return r;
}

/// Predictions on the clean (unpatched) graph.
inline std::vector<int> clean_predictions(const Graph& g, const GcnParams& params) {
  return predict_labels(clean_probabilities(g, params));
}

/// Attacks every node of `nodes` independently (flip, predict, unflip).
inline std::vector<AttackOutcome> attack_outcomes(const PatchedGcn& model, const PatchedAdjacency& adj,
                                                  std::span<const Index> nodes,
                                                  const std::vector<int>& clean_labels) {
  std::vector<AttackOutcome> out;
  out.reserve(nodes.size());
  PatchedAdjacency work = adj;
  for (Index i : nodes) {
    flip_in_place(work, i);
    out.push_back({i, clean_labels[i], model.predicted_label(work, i)});
    flip_in_place(work, i);
  }
  return out;
}

/// Fraction of `nodes` whose prediction under their own flip attack differs
/// from the clean prediction.
inline double asr(const PatchedGcn& model, const PatchedAdjacency& adj, std::span<const Index> nodes,
                  const std::vector<int>& clean_labels) {
  if (nodes.empty()) throw UndefinedRate("asr over an empty node set");
  Index hits = 0;
  for (const auto& o : attack_outcomes(model, adj, nodes, clean_labels))
    if (o.success()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

/// ceil(rate * |nodes|) nodes drawn without replacement, in an order fixed by
/// (seed, epoch).
inline std::vector<Index> sample_training_nodes(std::span<const Index> nodes, double rate, int epoch,
                                                std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw InvalidHyperparameter("sample rate must lie in (0, 1]");
  const double exact = rate * static_cast<double>(nodes.size());
  Index count = static_cast<Index>(std::llround(exact));
  if (std::abs(exact - static_cast<double>(count)) > 1e-9) count = static_cast<Index>(std::ceil(exact));
  std::vector<Index> order(nodes.begin(), nodes.end());
  rng::Stream stream(rng::mix(seed, 0x5a3b1eULL, static_cast<std::uint64_t>(epoch)));
  rng::shuffle(std::span<Index>(order), stream);
  order.resize(static_cast<std::size_t>(count));
  return order;
}

/// Optional callbacks into the outer loop.
struct GuapHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Patch state after a target is processed (after projection/clip/diag).
  std::function<void(const PatchedAdjacency&)> on_target;
  /// Binarized patch at the end of an epoch.
  std::function<void(const PatchedAdjacency&)> on_epoch_patch;
  /// A target was skipped because its gradients were degenerate.
  std::function<void(Index node, int epoch)> on_degenerate;
};

/// Optimizes a universal patch against `params` on graph `g`. Patch features
/// are drawn from stats fitted on all original nodes.
inline PatchArtifact generate_patch(const Graph& g, const GcnParams& params, const AttackHyper& hyper, std::uint64_t seed,
                          const GuapHooks& hooks = {}) {
  hyper.validate();
  const Index n = g.num_nodes();
  const Index m = hyper.patch_size(n);

  PatchArtifact art;
  art.n = n;
  art.hyper = hyper;
  art.seed = seed;
  art.stats = fit_feature_stats(*g.features);
  art.x_patch = sample_patch_features(art.stats, m, seed);

  const PatchedGcn model(g, params, art.x_patch);
  const std::vector<int> clean = clean_predictions(g, params);
  const std::vector<Index> train = g.train_nodes();
  if (train.empty()) throw ConfigError("guap: training split is empty");

  PatchedAdjacency adj(g.adjacency, m);
  PatchedAdjacency best = adj;
  double best_asr = -1.0;

  for (int epoch = 0; epoch < hyper.max_epoch; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto targets = sample_training_nodes(train, hyper.sample_rate, epoch, seed);
    for (Index i : targets) {
      ++rec.targets_visited;
      if (m == 0) continue;  // nothing to flip
      PatchedAdjacency attacked = attack_flip(adj, i);
      if (model.predicted_label(attacked, i) != clean[i]) continue;  // already fooled

      ++rec.igp_invocations;
      IgpResult r;
      try {
        r = igp(model, attacked, i, clean[i], hyper);
      } catch (const DegenerateGradient&) {
        ++rec.degenerate_skips;
        if (hooks.on_degenerate) hooks.on_degenerate(i, epoch);
        continue;
      }
      rec.igp_iterations += r.iterations;
      if (r.success) ++rec.igp_successes;

      attacked.border() += r.delta_border;
      attacked.patch_block() += r.delta_patch;
      flip_in_place(attacked, i);
      if (hyper.projection == Projection::kSphere)
        l2_normalize_patch_columns_in_place(attacked, hyper.radius);
      else
        l2_project_patch_columns_in_place(attacked, hyper.radius);
      if (hyper.clip) clip01_in_place(attacked);
      zero_patch_diagonal_in_place(attacked);
      adj = std::move(attacked);
      if (hooks.on_target) hooks.on_target(adj);
    }

    PatchedAdjacency binary = binarize(adj, hyper.binarize_threshold);
    if (hyper.resume_from_binarized) adj = binary;
    if (hooks.on_epoch_patch) hooks.on_epoch_patch(binary);

    rec.asr_train = asr(model, binary, train, clean);
    rec.patch_edges = patch_edge_count(binary);
    art.trace.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (rec.asr_train > best_asr) {  // earliest epoch wins ties
      best_asr = rec.asr_train;
      best = std::move(binary);
      art.best_epoch = epoch;
    }
  }

  art.best_asr = best_asr;
  art.border = best.border();
  art.patch_block = best.patch_block();
  return art;
}

}  // namespace guap
