#include <cstdlib>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "guap/config.hpp"
#include "guap/eval.hpp"
#include "guap/synthetic.hpp"

namespace guap {
namespace {

struct Victim {
  Graph g;
  GcnParams params;
};

const Victim& victim() {
  static const Victim v = [] {
    SbmConfig cfg;
    cfg.block_sizes = {40, 40, 40};
    cfg.p_in = 0.1;
    cfg.p_out = 0.01;
    cfg.train_per_class = 10;
    cfg.test_per_class = 20;
    cfg.seed = 8;
    Victim out;
    out.g = make_sbm(cfg);
    TrainConfig t;
    t.epochs = 100;
    out.params = train(out.g, t);
    return out;
  }();
  return v;
}

AttackHyper quick() {
  AttackHyper h;
  h.max_epoch = 3;
  h.max_iter = 8;
  h.radius = 3.0;
  h.patch_nodes = 3;
  return h;
}

// Synthetic graphs

TEST(Sbm, LabelsSplitsAndDeterminism) {
  SbmConfig cfg;
  cfg.block_sizes = {30, 50};
  cfg.train_per_class = 4;
  cfg.test_per_class = 6;
  const Graph g = make_sbm(cfg);
  EXPECT_EQ(g.num_nodes(), 80);
  EXPECT_EQ(g.num_classes, 2);
  EXPECT_EQ(g.labels[29], 0);
  EXPECT_EQ(g.labels[30], 1);
  EXPECT_EQ(g.train_nodes().size(), 8u);
  EXPECT_EQ(g.test_nodes().size(), 12u);
  EXPECT_NO_THROW(validate(g));
  const Graph h = make_sbm(cfg);
  EXPECT_TRUE(Matrix(*g.adjacency) == Matrix(*h.adjacency));
  EXPECT_EQ(g.split, h.split);
}

TEST(Sbm, InBlockDenserThanAcross) {
  SbmConfig cfg;
  cfg.block_sizes = {100, 100};
  const Graph g = make_sbm(cfg);
  double in = 0, out = 0;
  for (Index r = 0; r < g.num_nodes(); ++r)
    for (SparseMatrix::InnerIterator it(*g.adjacency, r); it; ++it)
      (g.labels[r] == g.labels[it.col()] ? in : out) += 1;
  EXPECT_GT(in, 3 * out);
}

TEST(Sbm, QuotaLargerThanBlockRejected) {
  SbmConfig cfg;
  cfg.block_sizes = {10};
  EXPECT_THROW(make_sbm(cfg), ConfigError);
}

// Evaluation

TEST(Eval, DeltaAccIsPatchedMinusClean) {
  const auto& v = victim();
  const auto art = generate_patch(v.g, v.params, quick(), 1);
  const auto r = evaluate_patch(art, v.g, v.params);
  EXPECT_EQ(r.delta_acc, r.acc_patched - r.acc_clean);
  EXPECT_EQ(r.acc_clean, accuracy(clean_probabilities(v.g, v.params), v.g.labels, v.g.test_nodes()));
  EXPECT_EQ(r.m, 3);
  EXPECT_EQ(r.train_outcomes.size(), v.g.train_nodes().size());
  EXPECT_EQ(r.test_outcomes.size(), v.g.test_nodes().size());
  EXPECT_DOUBLE_EQ(r.asr_train, art.best_asr);
  EXPECT_EQ(r.patch_edges, patch_edge_count(art.adjacency(v.g)));
}

TEST(Eval, ArtifactForOtherGraphRejected) {
  const auto& v = victim();
  auto art = generate_patch(v.g, v.params, quick(), 1);
  art.n += 1;
  EXPECT_THROW(evaluate_patch(art, v.g, v.params), ValidationError);
}

TEST(Eval, NoEdgeBaselineLeavesUnattackedNodesAlone) {
  const auto& v = victim();
  const auto r = baseline_no_edges(v.g, v.params, 4, 0);
  EXPECT_EQ(r.delta_acc, 0.0);
  EXPECT_LE(r.asr_test, 0.5);
  EXPECT_EQ(r.patch_edges, 0);
}

TEST(Eval, ZeroProbabilityEqualsNoEdges) {
  const auto& v = victim();
  auto a = baseline_random_edges(v.g, v.params, 4, 0.0, 3);
  auto b = baseline_no_edges(v.g, v.params, 4, 3);
  EXPECT_EQ(a.asr_test, b.asr_test);
  EXPECT_EQ(a.acc_patched, b.acc_patched);
  EXPECT_EQ(a.test_outcomes, b.test_outcomes);
}

TEST(Eval, RandomEdgesDeterministicAndNearExpectedCount) {
  const auto& v = victim();
  const auto a = baseline_random_edges(v.g, v.params, 5, 0.2, 9);
  const auto b = baseline_random_edges(v.g, v.params, 5, 0.2, 9);
  EXPECT_EQ(a.test_outcomes, b.test_outcomes);
  EXPECT_EQ(a.patch_edges, b.patch_edges);
  const double expected = 0.2 * (120.0 * 5 + 10.0);
  EXPECT_NEAR(static_cast<double>(a.patch_edges), expected, 4.0 * std::sqrt(expected));
  EXPECT_THROW(baseline_random_edges(v.g, v.params, 5, 1.5, 0), InvalidHyperparameter);
}

TEST(Eval, FullProbabilityIsEverything) {
  const auto& v = victim();
  const auto r = baseline_random_edges(v.g, v.params, 3, 1.0, 0);
  EXPECT_EQ(r.patch_edges, 120 * 3 + 3);
}

TEST(Eval, CalibratedProbability) {
  EXPECT_DOUBLE_EQ(calibrated_edge_probability(0, 100, 3), 0.0);
  EXPECT_DOUBLE_EQ(calibrated_edge_probability(303, 100, 3), 1.0);
  EXPECT_DOUBLE_EQ(calibrated_edge_probability(101, 100, 3), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(calibrated_edge_probability(5, 10, 0), 0.0);
}

TEST(Eval, RegeneratedFeaturesKeepStructure) {
  const auto& v = victim();
  const auto art = generate_patch(v.g, v.params, quick(), 2);
  const auto same = regenerate_features_eval(art, v.g, v.params, art.seed);
  const auto orig = evaluate_patch(art, v.g, v.params);
  EXPECT_EQ(same.test_outcomes, orig.test_outcomes);
  const auto other = regenerate_features_eval(art, v.g, v.params, art.seed + 1);
  EXPECT_EQ(other.patch_edges, orig.patch_edges);
  EXPECT_EQ(other.method, "regenerated");
}

TEST(Eval, TransferUsesRetrainedVictim) {
  const auto& v = victim();
  const auto art = generate_patch(v.g, v.params, quick(), 2);
  TrainConfig t;
  t.epochs = 100;
  const auto r = transfer_retrain_check(art, v.g, t, 77);
  EXPECT_EQ(r.method, "transfer");
  EXPECT_EQ(r.seed, 77u);
  t.seed = 77;
  EXPECT_EQ(r.acc_clean, accuracy(clean_probabilities(v.g, train(v.g, t)), v.g.labels, v.g.test_nodes()));
}

// Sweeps

TEST(Sweep, IndependentOfWorkerCount) {
  const auto& v = victim();
  const std::vector<double> values{2.0, 4.0};
  const std::vector<std::uint64_t> seeds{0, 1};
  const auto one = sweep(v.g, v.params, quick(), SweepAxis::kRadius, values, seeds, 1);
  const auto three = sweep(v.g, v.params, quick(), SweepAxis::kRadius, values, seeds, 3);
  EXPECT_EQ(one, three);
  ASSERT_EQ(one.size(), 2u);
  EXPECT_EQ(one[0].axis, "radius");
  EXPECT_EQ(one[1].value, 4.0);
  EXPECT_EQ(one[0].runs, 2);
}

TEST(Sweep, RowAveragesSeedRuns) {
  const auto& v = victim();
  AttackHyper h = quick();
  const auto rows = sweep(v.g, v.params, h, SweepAxis::kSampleRate, {0.5}, {4, 5});
  double asr = 0;
  for (std::uint64_t s : {4, 5}) {
    h.sample_rate = 0.5;
    asr += evaluate_patch(generate_patch(v.g, v.params, h, s), v.g, v.params).asr_test;
  }
  EXPECT_DOUBLE_EQ(rows[0].asr_test, asr / 2);
}

TEST(Sweep, InvalidInputsRejected) {
  const auto& v = victim();
  EXPECT_THROW(sweep(v.g, v.params, quick(), SweepAxis::kRadius, {}, {0}), ConfigError);
  EXPECT_THROW(sweep(v.g, v.params, quick(), SweepAxis::kRadius, {1.0}, {}), ConfigError);
  EXPECT_THROW(sweep(v.g, v.params, quick(), SweepAxis::kSampleRate, {0.0}, {0}), InvalidHyperparameter);
  EXPECT_THROW(parse_sweep_axis("temperature"), ConfigError);
  EXPECT_EQ(parse_sweep_axis("patch-frac"), SweepAxis::kPatchFraction);
}

TEST(Sweep, PatchFractionAxisOverridesExplicitSize) {
  const AttackHyper h = with_axis(quick(), SweepAxis::kPatchFraction, 0.05);
  EXPECT_FALSE(h.patch_nodes);
  EXPECT_EQ(h.patch_size(120), 6);
}

// Run configuration

TEST(Config, ReadsNestedSections) {
  const auto j = nlohmann::json::parse(R"({
    "dataset": "cora", "data_dir": "/d", "seed": 4, "repeats": 2,
    "train": {"hidden": 32, "weight_decay": 0.001},
    "attack": {"radius": 5, "patch_nodes": 12, "projection": "ball", "deepfool_point": "current",
               "deepfool_patch_norm": false, "resume_from_binarized": true}
  })");
  const RunConfig c = run_config_from_json(j);
  EXPECT_EQ(c.dataset, "cora");
  EXPECT_EQ(c.seed, 4u);
  EXPECT_TRUE(c.seed_given);
  EXPECT_EQ(c.repeats, 2);
  EXPECT_EQ(c.train.hidden, 32);
  EXPECT_EQ(c.train.weight_decay, 0.001);
  EXPECT_EQ(c.attack.radius, 5.0);
  EXPECT_EQ(*c.attack.patch_nodes, 12);
  EXPECT_EQ(c.attack.projection, Projection::kBall);
  EXPECT_EQ(c.attack.deepfool_point, DeepfoolPoint::kCurrent);
  EXPECT_FALSE(c.attack.deepfool_patch_norm);
  EXPECT_TRUE(c.attack.resume_from_binarized);
  EXPECT_EQ(c.attack.max_epoch, AttackHyper{}.max_epoch);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"datset": "cora"})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"attack": {"radious": 1}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"attack": {"radius": "big"}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"attack": {"projection": "cube"}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"repeats": 0})")), ConfigError);
}

TEST(Config, SeedPrecedence) {
  RunConfig c;
  ::unsetenv("GUAP_SEED");
  EXPECT_EQ(resolve_seed(std::nullopt, c), 0u);
  ::setenv("GUAP_SEED", "17", 1);
  EXPECT_EQ(resolve_seed(std::nullopt, c), 17u);
  c.seed = 5;
  c.seed_given = true;
  EXPECT_EQ(resolve_seed(std::nullopt, c), 5u);
  EXPECT_EQ(resolve_seed(9, c), 9u);
  c.seed_given = false;
  ::setenv("GUAP_SEED", "-3", 1);
  EXPECT_THROW(resolve_seed(std::nullopt, c), ConfigError);
  ::unsetenv("GUAP_SEED");
}

TEST(Config, EchoCoversEveryKnob) {
  RunConfig c;
  c.dataset = "citeseer";
  std::set<std::string> keys;
  for (const auto& [k, v] : config_echo(c)) keys.insert(k);
  for (const char* k : {"dataset", "seed", "train.weight_decay", "attack.radius", "attack.sample_rate",
                        "attack.projection", "attack.deepfool_point", "attack.resume_from_binarized"})
    EXPECT_TRUE(keys.count(k)) << k;
}

}  // namespace
}  // namespace guap
