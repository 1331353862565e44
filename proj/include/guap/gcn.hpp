#pragma once

// Two-layer graph convolution softmax(Â relu(Â X W0) W1), its full-batch
// training, and the exact derivatives with respect to raw adjacency entries
// that the patch optimizer needs. Derivatives go through the degree
// normalization: a raw entry (r, s) moves Â_rs directly and every entry of
// row/column r through the degree d_r.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "guap/errors.hpp"
#include "guap/graph.hpp"
#include "guap/patched_adjacency.hpp"
#include "guap/rng.hpp"

namespace guap {

struct GcnParams {
  Matrix w0;  // d x d'
  Matrix w1;  // d' x K

  Index input_dim() const { return w0.rows(); }
  Index hidden() const { return w0.cols(); }
  Index num_classes() const { return w1.cols(); }

  bool finite() const { return w0.allFinite() && w1.allFinite(); }
};

struct TrainConfig {
  Index hidden = 16;
  double learning_rate = 0.01;
  double weight_decay = 5e-3;
  int epochs = 200;
  std::uint64_t seed = 0;
};

struct TrainTrace {
  std::vector<double> loss;  // objective before each update
};

/// Node features of the patched graph: original sparse rows, then patch rows.
struct PatchedFeatures {
  std::shared_ptr<const SparseMatrix> original;
  Matrix patch;  // m x d

  Index rows() const { return original->rows() + patch.rows(); }
  Index dim() const { return original->cols(); }
};

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    auto e = (logits.row(r).array() - peak).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

/// Row-wise argmax, lowest class index on ties.
inline int argmax_row(const Matrix& z, Index r) {
  int best = 0;
  for (Index c = 1; c < z.cols(); ++c)
    if (z(r, c) > z(r, best)) best = static_cast<int>(c);
  return best;
}

inline std::vector<int> predict_labels(const Matrix& z) {
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Index r = 0; r < z.rows(); ++r) out[r] = argmax_row(z, r);
  return out;
}

/// X_new W0 for the patched feature block.
inline Matrix input_projection(const PatchedFeatures& x, const GcnParams& params) {
  if (x.dim() != params.input_dim())
    throw DimensionError("feature dimension " + std::to_string(x.dim()) +
                         " does not match W0 rows " + std::to_string(params.input_dim()));
  if (x.patch.rows() > 0 && x.patch.cols() != x.dim())
    throw DimensionError("patch feature dimension mismatch");
  const Index n = x.original->rows();
  Matrix h0(x.rows(), params.hidden());
  h0.topRows(n).noalias() = (*x.original) * params.w0;
  if (x.patch.rows() > 0) h0.bottomRows(x.patch.rows()).noalias() = x.patch * params.w0;
  return h0;
}

/// Z = softmax(Â relu(Â X W0) W1) for any feature representation that
/// multiplies with a dense matrix (sparse, dense).
template <typename Features>
Matrix forward(const NormalizedAdjacency& norm, const Features& x, const GcnParams& params) {
  if (x.rows() != norm.size())
    throw DimensionError("forward: feature rows " + std::to_string(x.rows()) +
                         " != adjacency size " + std::to_string(norm.size()));
  if (x.cols() != params.input_dim() || params.w1.rows() != params.hidden())
    throw DimensionError("forward: parameter shapes do not match features");
  const Matrix h0 = x * params.w0;
  const Matrix hidden = norm.apply(h0).cwiseMax(0.0);
  const Matrix p = hidden * params.w1;
  return softmax_rows(norm.apply(p));
}

/// Activations of one forward pass over a patched adjacency, retained for
/// the gradient computations.
/// Which per-node output a Jacobian differentiates.
enum class Output { kProbabilities, kLogits };

struct ForwardPass {
  NormalizedAdjacency norm;
  Matrix pre1;    // Â H0
  Matrix hidden;  // relu(pre1)
  Matrix proj;    // hidden W1
  Matrix logits;  // Â proj
  Matrix probs;   // softmax(logits)

  int predicted(Index i) const { return argmax_row(probs, i); }
};

inline ForwardPass forward_pass(const PatchedAdjacency& adj, const Matrix& h0, const GcnParams& params) {
  if (h0.rows() != adj.size()) throw DimensionError("forward_pass: feature rows do not match adjacency");
  ForwardPass fp{NormalizedAdjacency(adj), {}, {}, {}, {}, {}};
  fp.pre1 = fp.norm.apply(h0);
  fp.hidden = fp.pre1.cwiseMax(0.0);
  fp.proj = fp.hidden * params.w1;
  fp.logits = fp.norm.apply(fp.proj);
  fp.probs = softmax_rows(fp.logits);
  return fp;
}

/// Loss gradient restricted to the writable border positions.
///   upper(r, j) = dL/dA_new[r, n+j]
///   lower(r, j) = dL/dA_new[n+j, r]
///   patch(j, k) = dL/dA_new[n+j, n+k]
struct BorderGradient {
  Matrix upper;
  Matrix lower;
  Matrix patch;
};

namespace detail {

inline Matrix glorot(Index rows, Index cols, std::uint64_t seed, std::uint64_t layer) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      w(r, c) = (2.0 * rng::uniform(seed, layer, r, c) - 1.0) * limit;
  return w;
}

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int t = 0;
  Matrix m0, v0, m1, v1;

  void step(GcnParams& p, const Matrix& g0, const Matrix& g1) {
    if (t == 0) {
      m0 = Matrix::Zero(g0.rows(), g0.cols());
      v0 = m0;
      m1 = Matrix::Zero(g1.rows(), g1.cols());
      v1 = m1;
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    auto update = [&](Matrix& w, Matrix& m, Matrix& v, const Matrix& g) {
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    update(p.w0, m0, v0, g0);
    update(p.w1, m1, v1, g1);
  }
};

}  // namespace detail

/// Full-batch Adam on the mean cross-entropy over the training split, with
/// L2 weight decay on the first layer. No dropout, no bias terms.
inline GcnParams train(const Graph& g, const TrainConfig& cfg, TrainTrace* trace = nullptr) {
  if (cfg.epochs <= 0) throw ConfigError("train: epochs must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (cfg.hidden <= 0) throw ConfigError("train: hidden width must be positive");
  const auto train_nodes = g.train_nodes();
  if (train_nodes.empty()) throw ConfigError("train: training split is empty");
  if (g.num_classes <= 0) throw ConfigError("train: no classes");

  const Index n = g.num_nodes();
  const Index k = g.num_classes;
  const NormalizedAdjacency norm = normalize(g);

  // Â X is fixed during training; keep it sparse.
  SparseMatrix ax;
  {
    SparseMatrix a_hat = *g.adjacency;
    for (Index r = 0; r < n; ++r)
      for (SparseMatrix::InnerIterator it(a_hat, r); it; ++it)
        it.valueRef() *= norm.inv_sqrt_degrees()[r] * norm.inv_sqrt_degrees()[it.col()];
    SparseMatrix eye(n, n);
    eye.setIdentity();
    a_hat += SparseMatrix(norm.inv_sqrt_degrees().cwiseAbs2().asDiagonal() * eye);
    ax = (a_hat * (*g.features)).pruned();
  }

  GcnParams p{detail::glorot(g.feature_dim(), cfg.hidden, cfg.seed, 0),
              detail::glorot(cfg.hidden, k, cfg.seed, 1)};
  detail::Adam adam{cfg.learning_rate};
  const double inv_count = 1.0 / static_cast<double>(train_nodes.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Matrix pre1 = ax * p.w0;
    const Matrix hidden = pre1.cwiseMax(0.0);
    const Matrix agg = norm.apply(hidden);
    const Matrix z = softmax_rows(agg * p.w1);

    Matrix g2 = Matrix::Zero(n, k);
    double loss = 0.0;
    for (Index v : train_nodes) {
      const int y = g.labels[v];
      loss -= std::log(std::max(z(v, y), 1e-300));
      g2.row(v) = z.row(v);
      g2(v, y) -= 1.0;
    }
    loss = loss * inv_count + 0.5 * cfg.weight_decay * p.w0.squaredNorm();
    if (trace) trace->loss.push_back(loss);
    g2 *= inv_count;

    const Matrix grad_w1 = agg.transpose() * g2;
    Matrix g1 = norm.apply(g2 * p.w1.transpose());
    g1.array() *= (pre1.array() > 0.0).cast<double>();
    const Matrix grad_w0 = Matrix(ax.transpose() * g1) + cfg.weight_decay * p.w0;
    adam.step(p, grad_w0, grad_w1);
  }
  return p;
}

/// Fraction of `nodes` whose prediction in `z` matches their label.
inline double accuracy(const Matrix& z, const std::vector<int>& labels, const std::vector<Index>& nodes) {
  if (nodes.empty()) throw UndefinedRate("accuracy over an empty node set");
  Index hits = 0;
  for (Index v : nodes)
    if (argmax_row(z, v) == labels[v]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

inline Matrix clean_probabilities(const Graph& g, const GcnParams& params) {
  return forward(normalize(g), *g.features, params);
}

/// The victim model bound to a graph and a set of patch features: forward
/// passes over patched adjacencies and the adjacency derivatives.
class PatchedGcn {
 public:
  PatchedGcn(const Graph& g, GcnParams params, Matrix x_patch)
      : params_(std::move(params)),
        features_{g.features, std::move(x_patch)},
        labels_(g.labels),
        train_nodes_(g.train_nodes()) {
    h0_ = guap::input_projection(features_, params_);
  }

  const GcnParams& params() const { return params_; }
  const PatchedFeatures& features() const { return features_; }
  const Matrix& input_projection() const { return h0_; }
  const std::vector<Index>& train_nodes() const { return train_nodes_; }
  const std::vector<int>& labels() const { return labels_; }
  Index n() const { return features_.original->rows(); }
  Index m() const { return features_.patch.rows(); }

  ForwardPass forward(const PatchedAdjacency& adj) const {
    if (adj.n() != n() || adj.m() != m()) throw DimensionError("PatchedGcn: adjacency/patch size mismatch");
    return forward_pass(adj, h0_, params_);
  }

  int predicted_label(const PatchedAdjacency& adj, Index i) const { return forward(adj).predicted(i); }

  /// -sum over training nodes (minus `exclude`) of ln Z[j, y_j].
  double masked_loss(const ForwardPass& fp, std::optional<Index> exclude = std::nullopt) const {
    double loss = 0.0;
    for (Index v : train_nodes_) {
      if (exclude && v == *exclude) continue;
      loss -= std::log(fp.probs(v, labels_[v]));
    }
    return loss;
  }

  double masked_loss(const PatchedAdjacency& adj, std::optional<Index> exclude = std::nullopt) const {
    return masked_loss(forward(adj), exclude);
  }

  /// Row k of the result is d f(A_new)[i, k] / d(row i of A_new), with
  /// entries (i, j) and (j, i) moving together. f is the softmax output or,
  /// with `of = kLogits`, the pre-softmax logits.
  Matrix output_jacobian_wrt_adj_row(const ForwardPass& fp, Index i, Output of = Output::kProbabilities) const {
    const Index size = fp.norm.size();
    if (i < 0 || i >= size) throw InvalidTarget("jacobian row out of range");
    const Index k = params_.num_classes();
    const Vector& dis = fp.norm.inv_sqrt_degrees();
    const Vector& deg = fp.norm.degrees();

    const Vector a = fp.norm.column(i);  // Â[:, i]
    const Matrix mask = (fp.pre1.array() > 0.0).cast<double>().matrix();
    // T = Â diag(a) mask; the only class-independent second-hop term.
    const Matrix t = fp.norm.apply(a.asDiagonal() * mask);
    const Matrix h0t = h0_.cwiseProduct(t);
    const Eigen::RowVectorXd mask_i = mask.row(i);
    const Eigen::RowVectorXd h0_i = h0_.row(i);
    const Vector neg_half_inv_deg = (-0.5 * deg.array().inverse()).matrix();

    Matrix jac(k, size);
    for (Index c = 0; c < k; ++c) {
      // dl = df[i, c] / dlogits[i, :]
      Eigen::RowVectorXd dl;
      if (of == Output::kLogits) {
        dl = Eigen::RowVectorXd::Unit(k, c);
      } else {
        dl = -fp.probs(i, c) * fp.probs.row(i);
        dl[c] += fp.probs(i, c);
      }
      const Vector w = params_.w1 * dl.transpose();
      const double s0 = dl.dot(fp.logits.row(i));

      const Vector hw = fp.hidden * w;
      const Vector tw = h0t * w;
      const Vector q1 = h0_ * mask_i.transpose().cwiseProduct(w);
      const Vector q2 = mask * h0_i.transpose().cwiseProduct(w);

      Vector gvec = neg_half_inv_deg.cwiseProduct(2.0 * a.cwiseProduct(hw) + tw);
      gvec[i] += neg_half_inv_deg[i] * s0;

      const Vector m_row = hw + a[i] * q1;    // M[i, j]
      const Vector m_col = a.cwiseProduct(q2);  // M[j, i] for j != i
      Vector row = (dis * dis[i]).cwiseProduct(m_row + m_col) + gvec;
      row.array() += gvec[i];
      row[i] = dis[i] * dis[i] * m_row[i] + gvec[i];
      jac.row(c) = row.transpose();
    }
    return jac;
  }

  /// Gradient of masked_loss at the writable border positions.
  BorderGradient loss_grad_wrt_patch_blocks(const ForwardPass& fp,
                                            std::optional<Index> exclude = std::nullopt) const {
    const LossFactors f = loss_factors(fp, exclude);
    const Index nn = n();
    const Index mm = m();
    const Vector& dis = fp.norm.inv_sqrt_degrees();
    const Vector dis_top = dis.head(nn);
    const Vector dis_bot = dis.tail(mm);

    BorderGradient out;
    out.upper = dis_top.asDiagonal() * (f.u.topRows(nn) * f.v.bottomRows(mm).transpose()) *
                dis_bot.asDiagonal();
    out.upper.colwise() += f.g.head(nn);
    out.lower = dis_top.asDiagonal() * (f.v.topRows(nn) * f.u.bottomRows(mm).transpose()) *
                dis_bot.asDiagonal();
    out.lower.rowwise() += f.g.tail(mm).transpose();
    out.patch = dis_bot.asDiagonal() * (f.u.bottomRows(mm) * f.v.bottomRows(mm).transpose()) *
                dis_bot.asDiagonal();
    out.patch.colwise() += f.g.tail(mm);
    return out;
  }

  /// Gradient of masked_loss at every raw position; (n+m)^2 output.
  Matrix loss_grad_dense(const ForwardPass& fp, std::optional<Index> exclude = std::nullopt) const {
    const LossFactors f = loss_factors(fp, exclude);
    const Vector& dis = fp.norm.inv_sqrt_degrees();
    Matrix out = dis.asDiagonal() * (f.u * f.v.transpose()) * dis.asDiagonal();
    out.colwise() += f.g;
    return out;
  }

 private:
  // dL/dÂ = U V^T; g is dL/d(degree).
  struct LossFactors {
    Matrix u;
    Matrix v;
    Vector g;
  };

  LossFactors loss_factors(const ForwardPass& fp, std::optional<Index> exclude) const {
    const Index size = fp.norm.size();
    const Index k = params_.num_classes();
    const Index h = params_.hidden();

    Matrix g2 = Matrix::Zero(size, k);
    for (Index v : train_nodes_) {
      if (exclude && v == *exclude) continue;
      g2.row(v) = fp.probs.row(v);
      g2(v, labels_[v]) -= 1.0;
    }
    Matrix g1 = fp.norm.apply(g2 * params_.w1.transpose());
    g1.array() *= (fp.pre1.array() > 0.0).cast<double>();

    LossFactors f;
    f.u.resize(size, k + h);
    f.u << g2, g1;
    f.v.resize(size, k + h);
    f.v << fp.proj, h0_;
    Matrix av(size, k + h);
    av << fp.logits, fp.pre1;
    const Matrix au = fp.norm.apply(f.u);
    f.g = (-0.5 * fp.norm.degrees().array().inverse() *
           (f.u.cwiseProduct(av).rowwise().sum() + f.v.cwiseProduct(au).rowwise().sum()).array())
              .matrix();
    return f;
  }

  GcnParams params_;
  PatchedFeatures features_;
  std::vector<int> labels_;
  std::vector<Index> train_nodes_;
  Matrix h0_;
};

}  // namespace guap
