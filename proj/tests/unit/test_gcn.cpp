#include <cmath>
#include <memory>
#include <numbers>

#include <gtest/gtest.h>

#include "dense_oracle.hpp"
#include "guap/gcn.hpp"
#include "test_support.hpp"

namespace guap {
namespace {

using testing::random_instance;

TEST(Forward, ZeroSecondLayerGivesUniformRows) {
  auto inst = random_instance(1, 6, 2, 3, 4, 5);
  inst.params.w1.setZero();
  const PatchedGcn model(inst.graph, inst.params, inst.x_patch);
  const Matrix z = model.forward(inst.adj).probs;
  for (Index r = 0; r < z.rows(); ++r)
    for (Index c = 0; c < z.cols(); ++c) EXPECT_NEAR(z(r, c), 0.2, 1e-15);
}

TEST(Forward, SingleIsolatedNodeByHand) {
  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(1, 1);
  Matrix x(1, 1);
  x << 2.0;
  g.features = std::make_shared<SparseMatrix>(x.sparseView());
  GcnParams p;
  p.w0.resize(1, 2);
  p.w0 << 0.5, -1.0;
  p.w1.resize(2, 2);
  p.w1 << 1.0, 0.0, 0.0, 1.0;
  // Â = [1]; hidden = relu([1, -2]) = [1, 0]; logits = [1, 0].
  const Matrix z = forward(normalize(PatchedAdjacency(g.adjacency, 0)), *g.features, p);
  const double e = std::numbers::e;
  EXPECT_NEAR(z(0, 0), e / (e + 1.0), 1e-15);
  EXPECT_NEAR(z(0, 1), 1.0 / (e + 1.0), 1e-15);
}

TEST(Forward, RowsAreProbabilityVectors) {
  auto inst = random_instance(2, 8, 3, 5, 4, 4);
  inst.params.w1 *= 30.0;  // sharp logits
  const Matrix z = PatchedGcn(inst.graph, inst.params, inst.x_patch).forward(inst.adj).probs;
  for (Index r = 0; r < z.rows(); ++r) {
    EXPECT_NEAR(z.row(r).sum(), 1.0, 1e-12);
    EXPECT_GE(z.row(r).minCoeff(), 0.0);
  }
}

TEST(Forward, MatchesDenseReference) {
  auto inst = random_instance(4, 7, 2, 3, 5, 3);
  const Matrix z = PatchedGcn(inst.graph, inst.params, inst.x_patch).forward(inst.adj).probs;
  const auto ref = oracle::gcn(inst.raw, inst.x_all, inst.params.w0, inst.params.w1);
  EXPECT_LT((Eigen::MatrixXd(z) - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Forward, ShapeMismatchRejected) {
  auto inst = random_instance(4, 5, 0, 3, 2, 2);
  Matrix wrong = Matrix::Ones(4, 3);
  EXPECT_THROW(forward(normalize(inst.graph), wrong, inst.params), DimensionError);
}

TEST(Softmax, ShiftInvariant) {
  Matrix logits(2, 3);
  logits << 1.0, 2.0, 3.0, -5.0, 0.0, 5.0;
  Matrix shifted = logits.array() + 123.0;
  EXPECT_TRUE(softmax_rows(logits).isApprox(softmax_rows(shifted), 1e-14));
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  Matrix z(3, 3);
  z << 0.1, 0.7, 0.2, 0.5, 0.5, 0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3;
  EXPECT_EQ(predict_labels(z), (std::vector<int>{1, 0, 0}));
}

TEST(Predict, InvariantUnderMonotoneRescaling) {
  Matrix z = Matrix::Random(20, 5);
  Matrix scaled = (3.0 * z.array() + 7.0).exp();
  EXPECT_EQ(predict_labels(z), predict_labels(scaled));
}

TEST(MaskedLoss, EmptySumWhenOnlyTrainNodeExcluded) {
  auto inst = random_instance(5, 4, 1, 3, 2, 2);
  for (Index i = 0; i < 4; ++i) inst.graph.split[i] = i == 1 ? Split::kTrain : Split::kOther;
  const PatchedGcn model(inst.graph, inst.params, inst.x_patch);
  EXPECT_EQ(model.masked_loss(inst.adj, Index{1}), 0.0);
  EXPECT_GT(model.masked_loss(inst.adj), 0.0);
}

TEST(MaskedLoss, UniformPredictionsGiveQLogK) {
  auto inst = random_instance(6, 9, 2, 3, 3, 4);
  inst.params.w1.setZero();
  const PatchedGcn model(inst.graph, inst.params, inst.x_patch);
  const double q = static_cast<double>(inst.graph.train_nodes().size()) - 1.0;
  EXPECT_NEAR(model.masked_loss(inst.adj, inst.graph.train_nodes().front()), q * std::log(4.0), 1e-12);
}

TEST(MaskedLoss, PerfectPredictionsGiveZero) {
  // Single node, one class-separating weight pushed to a huge margin.
  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(1, 1);
  Matrix x(1, 1);
  x << 1.0;
  g.features = std::make_shared<SparseMatrix>(x.sparseView());
  g.labels = {0};
  g.split = {Split::kTrain};
  g.num_classes = 2;
  GcnParams p;
  p.w0 = Matrix::Ones(1, 1);
  p.w1.resize(1, 2);
  p.w1 << 800.0, -800.0;
  const PatchedGcn model(g, p, Matrix(0, 1));
  EXPECT_EQ(model.masked_loss(PatchedAdjacency(g.adjacency, 0)), 0.0);
}

// Jacobian of one output row against symmetric finite differences on the
// dense reference.
double jacobian_error(const testing::RandomInstance& inst, Index i, double h = 1e-5) {
  const PatchedGcn model(inst.graph, inst.params, inst.x_patch);
  const Matrix jac = model.output_jacobian_wrt_adj_row(model.forward(inst.adj), i);
  const Index size = inst.raw.rows();
  const Index k = inst.params.num_classes();
  Eigen::MatrixXd fd(k, size);
  for (Index c = 0; c < k; ++c) {
    auto f = [&](const Eigen::MatrixXd& raw) {
      return oracle::gcn(raw, inst.x_all, inst.params.w0, inst.params.w1)(i, c);
    };
    for (Index j = 0; j < size; ++j) fd(c, j) = oracle::symmetric_fd(f, inst.raw, i, j, h);
  }
  return oracle::relative_error(jac, fd);
}

TEST(OutputJacobian, SixNodeInstanceMatchesFiniteDifferences) {
  const auto inst = random_instance(2024, 6, 2, 4, 5, 3);
  for (Index i = 0; i < 8; ++i) EXPECT_LT(jacobian_error(inst, i), 1e-5) << "row " << i;
}

TEST(OutputJacobian, RandomInstancesMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index n = 2 + static_cast<Index>(seed % 7);
    const Index m = 1 + static_cast<Index>(seed % 3);
    const int k = 2 + static_cast<int>(seed % 3);
    const auto inst = random_instance(seed, n, m, 3, 4, k);
    const Index i = static_cast<Index>(seed % static_cast<std::uint64_t>(n));
    EXPECT_LT(jacobian_error(inst, i), 1e-5) << "seed " << seed;
  }
}

TEST(OutputJacobian, SymmetricPerturbationIsSumOfOneSidedDerivatives) {
  const auto inst = random_instance(31, 6, 2, 3, 4, 3);
  const Index i = 1;
  auto f = [&](const Eigen::MatrixXd& raw) {
    return oracle::gcn(raw, inst.x_all, inst.params.w0, inst.params.w1)(i, 2);
  };
  for (Index j = 0; j < 8; ++j) {
    if (j == i) continue;
    const double sym = oracle::symmetric_fd(f, inst.raw, i, j, 1e-5);
    const double one_sided = oracle::entry_fd(f, inst.raw, i, j, 1e-5) + oracle::entry_fd(f, inst.raw, j, i, 1e-5);
    EXPECT_NEAR(sym, one_sided, 1e-8 * std::max(1.0, std::abs(sym)));
  }
}

TEST(OutputJacobian, DistantComponentHasNoInfluence) {
  // Nodes {0,1,2} and {3,4,5} are separate components and there is no patch:
  // entries inside the other component cannot reach node 0's output.
  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(build_adjacency(6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}}));
  Matrix x = Matrix::Random(6, 3).cwiseAbs();
  g.features = std::make_shared<SparseMatrix>(x.sparseView());
  g.num_classes = 2;
  g.labels.assign(6, 0);
  g.split.assign(6, Split::kTrain);
  GcnParams p{Matrix::Random(3, 4), Matrix::Random(4, 2)};
  const Eigen::MatrixXd raw = Eigen::MatrixXd(*g.adjacency);
  auto f = [&](const Eigen::MatrixXd& r) { return oracle::gcn(r, x, p.w0, p.w1)(0, 1); };
  EXPECT_EQ(oracle::symmetric_fd(f, raw, 3, 4, 1e-5), 0.0);
  EXPECT_EQ(oracle::symmetric_fd(f, raw, 4, 5, 1e-5), 0.0);

  // The analytic row Jacobian agrees with the oracle across components too.
  const PatchedGcn model(g, p, Matrix(0, 3));
  const Matrix jac = model.output_jacobian_wrt_adj_row(model.forward(PatchedAdjacency(g.adjacency, 0)), 0);
  for (Index j = 0; j < 6; ++j)
    EXPECT_NEAR(jac(1, j), oracle::symmetric_fd(f, raw, 0, j, 1e-5), 1e-8);
}

double loss_grad_error(const testing::RandomInstance& inst, std::optional<Index> exclude, double h = 1e-5) {
  const PatchedGcn model(inst.graph, inst.params, inst.x_patch);
  const Matrix grad = model.loss_grad_dense(model.forward(inst.adj), exclude);
  const auto train = inst.graph.train_nodes();
  auto f = [&](const Eigen::MatrixXd& raw) {
    return oracle::masked_loss(raw, inst.x_all, inst.params.w0, inst.params.w1, inst.graph.labels, train, exclude);
  };
  Eigen::MatrixXd fd(inst.raw.rows(), inst.raw.cols());
  for (Index r = 0; r < fd.rows(); ++r)
    for (Index s = 0; s < fd.cols(); ++s) fd(r, s) = oracle::entry_fd(f, inst.raw, r, s, h);
  return oracle::relative_error(grad, fd);
}

TEST(LossGradient, SixNodeInstanceMatchesFiniteDifferences) {
  const auto inst = random_instance(77, 6, 2, 4, 5, 3);
  EXPECT_LT(loss_grad_error(inst, std::nullopt), 1e-5);
  EXPECT_LT(loss_grad_error(inst, Index{0}), 1e-5);
}

TEST(LossGradient, RandomInstancesMatchFiniteDifferences) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const Index n = 2 + static_cast<Index>(seed % 7);
    const Index m = 1 + static_cast<Index>(seed % 3);
    const int k = 2 + static_cast<int>(seed % 3);
    const auto inst = random_instance(seed, n, m, 3, 4, k);
    EXPECT_LT(loss_grad_error(inst, static_cast<Index>(seed % static_cast<std::uint64_t>(n))), 1e-5)
        << "seed " << seed;
  }
}

TEST(LossGradient, BorderBlocksAgreeWithDense) {
  const auto inst = random_instance(8, 7, 3, 3, 4, 3);
  const PatchedGcn model(inst.graph, inst.params, inst.x_patch);
  const auto fp = model.forward(inst.adj);
  const Matrix dense = model.loss_grad_dense(fp, Index{2});
  const BorderGradient border = model.loss_grad_wrt_patch_blocks(fp, Index{2});
  EXPECT_TRUE(border.upper.isApprox(dense.topRightCorner(7, 3), 1e-13));
  EXPECT_TRUE(border.lower.isApprox(dense.bottomLeftCorner(3, 7).transpose(), 1e-13));
  EXPECT_TRUE(border.patch.isApprox(dense.bottomRightCorner(3, 3), 1e-13));
}

TEST(LossGradient, FlatLossHasZeroGradient) {
  // With W1 = 0 every prediction is uniform whatever the adjacency, so the
  // loss is constant and its gradient vanishes identically.
  auto inst = random_instance(9, 5, 2, 3, 3, 3);
  inst.params.w1.setZero();
  const PatchedGcn model(inst.graph, inst.params, inst.x_patch);
  EXPECT_LT(model.loss_grad_dense(model.forward(inst.adj)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LossGradient, DescentStepLowersLoss) {
  const auto inst = random_instance(12, 8, 3, 3, 4, 3);
  const PatchedGcn model(inst.graph, inst.params, inst.x_patch);
  const auto fp = model.forward(inst.adj);
  const auto g = model.loss_grad_wrt_patch_blocks(fp);
  PatchedAdjacency next = inst.adj;
  next.border() -= 1e-3 * 0.5 * (g.upper + g.lower);
  next.patch_block() -= 1e-3 * 0.5 * (g.patch + g.patch.transpose());
  EXPECT_LT(model.masked_loss(next), model.masked_loss(fp));
}

Graph labelled_toy() {
  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(1, 1);
  Matrix x(1, 2);
  x << 1.0, 0.5;
  g.features = std::make_shared<SparseMatrix>(x.sparseView());
  g.labels = {0};
  g.split = {Split::kTrain};
  g.num_classes = 2;
  return g;
}

TEST(Train, OverfitsSingleton) {
  const Graph g = labelled_toy();
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.epochs = 100;
  const GcnParams p = train(g, cfg);
  EXPECT_EQ(clean_probabilities(g, p).row(0).maxCoeff() == clean_probabilities(g, p)(0, 0), true);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  auto inst = random_instance(21, 30, 0, 6, 8, 3, 0.15);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 5;
  TrainTrace trace;
  const GcnParams a = train(inst.graph, cfg, &trace);
  const GcnParams b = train(inst.graph, cfg);
  EXPECT_LT(trace.loss.back(), trace.loss.front());
  EXPECT_TRUE(a.w0 == b.w0 && a.w1 == b.w1);
  EXPECT_TRUE(a.finite());
}

TEST(Train, EmptyTrainSplitRejected) {
  Graph g = labelled_toy();
  g.split = {Split::kTest};
  EXPECT_THROW(train(g, TrainConfig{}), ConfigError);
}

}  // namespace
}  // namespace guap
