// guap: dataset conversion, victim training, patch generation, evaluation,
// baselines and sweeps.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "guap/config.hpp"
#include "guap/convert.hpp"
#include "guap/eval.hpp"
#include "guap/io.hpp"

namespace fs = std::filesystem;
using namespace guap;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kData = 4 };

void log(const std::string& msg) { std::cerr << "guap: " << msg << '\n'; }

// Options shared by every pipeline subcommand.
struct Common {
  std::string config_path;
  std::string dataset;
  std::string data_dir;
  bool no_check_counts = false;
  std::optional<std::uint64_t> seed;
};

// Attack overrides.
struct AttackFlags {
  std::optional<double> patch_frac;
  std::optional<Index> patch_nodes;
  std::optional<double> radius;
  std::optional<double> sample_rate;
  std::optional<int> max_epoch;
  std::optional<int> max_iter;
  std::optional<double> step;
  std::optional<double> overshoot;
  bool no_clip = false;
  bool resume_binarized = false;
  std::optional<std::string> projection;
  std::optional<std::string> deepfool_point;
  bool deepfool_full_norm = false;
};

// Training overrides.
struct TrainFlags {
  std::optional<Index> hidden;
  std::optional<double> lr;
  std::optional<double> weight_decay;
  std::optional<int> epochs;
  std::optional<std::uint64_t> train_seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--dataset", c.dataset, "dataset name (cora, citeseer, polblogs, or a free label)");
  app->add_option("--data", c.data_dir, "directory with nodes.tsv, edges.tsv and optional features.txt");
  app->add_flag("--no-check-counts", c.no_check_counts, "skip the builtin node/edge count validation");
  app->add_option("--seed", c.seed, "run seed (default: config, then GUAP_SEED, then 0)");
}

void add_train(CLI::App* app, TrainFlags& t) {
  app->add_option("--hidden", t.hidden, "hidden width");
  app->add_option("--lr", t.lr, "learning rate");
  app->add_option("--weight-decay", t.weight_decay, "L2 weight decay on the first layer");
  app->add_option("--epochs", t.epochs, "training epochs");
  app->add_option("--train-seed", t.train_seed, "weight initialization seed");
}

void add_attack(CLI::App* app, AttackFlags& a) {
  auto* frac = app->add_option("--patch-frac", a.patch_frac, "patch size as a fraction of n");
  auto* nodes = app->add_option("--patch-nodes", a.patch_nodes, "explicit patch size m");
  frac->excludes(nodes);
  nodes->excludes(frac);
  app->add_option("--radius", a.radius, "L2 projection radius");
  app->add_option("--sample-rate", a.sample_rate, "fraction of training nodes visited per epoch");
  app->add_option("--max-epoch", a.max_epoch, "outer-loop epochs");
  app->add_option("--max-iter", a.max_iter, "inner-loop iterations");
  app->add_option("--step", a.step, "inner-loop descent step");
  app->add_option("--overshoot", a.overshoot, "deepfool overshoot");
  app->add_flag("--no-clip", a.no_clip, "skip clipping to [0, 1] in the outer loop");
  app->add_flag("--resume-binarized", a.resume_binarized, "start each epoch from the binarized patch");
  app->add_option("--projection", a.projection, "ball or sphere")->check(CLI::IsMember({"ball", "sphere"}));
  app->add_option("--deepfool-point", a.deepfool_point, "input or current")
      ->check(CLI::IsMember({"input", "current"}));
  app->add_flag("--deepfool-full-norm", a.deepfool_full_norm, "size the deepfool step over the whole row");
}

RunConfig resolve(const Common& c, const TrainFlags* t, const AttackFlags* a) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (!c.dataset.empty()) cfg.dataset = c.dataset;
  if (!c.data_dir.empty()) cfg.data_dir = c.data_dir;
  if (c.no_check_counts) cfg.check_counts = false;
  cfg.seed = resolve_seed(c.seed, cfg);
  if (t) {
    if (t->hidden) cfg.train.hidden = *t->hidden;
    if (t->lr) cfg.train.learning_rate = *t->lr;
    if (t->weight_decay) cfg.train.weight_decay = *t->weight_decay;
    if (t->epochs) cfg.train.epochs = *t->epochs;
    if (t->train_seed) cfg.train.seed = *t->train_seed;
  }
  if (a) {
    auto& h = cfg.attack;
    if (a->patch_frac) {
      h.patch_fraction = *a->patch_frac;
      h.patch_nodes.reset();
    }
    if (a->patch_nodes) h.patch_nodes = *a->patch_nodes;
    if (a->radius) h.radius = *a->radius;
    if (a->sample_rate) h.sample_rate = *a->sample_rate;
    if (a->max_epoch) h.max_epoch = *a->max_epoch;
    if (a->max_iter) h.max_iter = *a->max_iter;
    if (a->step) h.step = *a->step;
    if (a->overshoot) h.overshoot = *a->overshoot;
    if (a->no_clip) h.clip = false;
    if (a->resume_binarized) h.resume_from_binarized = true;
    if (a->projection) h.projection = parse_projection(*a->projection);
    if (a->deepfool_point) h.deepfool_point = parse_deepfool_point(*a->deepfool_point);
    if (a->deepfool_full_norm) h.deepfool_patch_norm = false;
    h.validate();
  }
  if (cfg.data_dir.empty()) throw ConfigError("no dataset directory (use --data or data_dir in the config)");
  return cfg;
}

Graph load(const RunConfig& cfg) {
  DatasetDescriptor d;
  const bool builtin = cfg.dataset == "cora" || cfg.dataset == "citeseer" || cfg.dataset == "polblogs";
  if (builtin) {
    d = builtin_descriptor(cfg.dataset, cfg.data_dir);
    if (!cfg.check_counts) {
      d.expected_nodes.reset();
      d.expected_edges.reset();
      d.expected_classes.reset();
      d.expected_train.reset();
      d.expected_test.reset();
    }
  } else {
    d.name = cfg.dataset.empty() ? fs::path(cfg.data_dir).filename().string() : cfg.dataset;
    d.root = cfg.data_dir;
  }
  Graph g = load_dataset(d);
  std::ostringstream s;
  s << "loaded " << d.name << ": n=" << g.num_nodes() << " edges=" << g.num_edges() << " d=" << g.feature_dim()
    << " K=" << g.num_classes << " train=" << g.train_nodes().size() << " test=" << g.test_nodes().size();
  log(s.str());
  return g;
}

GcnParams load_params(const std::string& path, const Graph& g) {
  ModelRecord rec = load_model(path);
  if (rec.params.input_dim() != g.feature_dim() || rec.params.num_classes() != g.num_classes)
    throw ValidationError(path + ": model shape does not match the dataset");
  return rec.params;
}

void finish_report(EvalReport& r, const RunConfig& cfg, const std::string& out,
                   std::chrono::steady_clock::time_point start) {
  if (r.dataset.empty()) r.dataset = cfg.dataset;
  r.config = config_echo(cfg);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_report(r, out);
  std::ostringstream s;
  s << r.method << ": asr_train=" << r.asr_train << " asr_test=" << r.asr_test << " acc_clean=" << r.acc_clean
    << " delta_acc=" << r.delta_acc << " patch_edges=" << r.patch_edges << " -> " << out;
  log(s.str());
  for (const auto& w : r.warnings) log("warning: " + w);
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v;
    if (!text::parse_double(item, v)) throw ConfigError("not a number in value list: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty value list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal adversarial patching of graphs"};
  app.require_subcommand(1);

  // convert
  std::string conv_format = "auto", conv_src, conv_dst;
  std::optional<std::uint64_t> conv_seed;
  auto* convert_cmd = app.add_subcommand("convert", "convert a public dataset distribution");
  convert_cmd->add_option("--format", conv_format, "auto, linqs, planetoid or gml")
      ->check(CLI::IsMember({"auto", "linqs", "planetoid", "gml"}));
  convert_cmd->add_option("--src", conv_src, "source directory or .gml file")->required();
  convert_cmd->add_option("--dst", conv_dst, "output directory")->required();
  convert_cmd->add_option("--seed", conv_seed, "split seed when the source has no split");

  // train-gcn
  Common train_common;
  TrainFlags train_flags;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train-gcn", "train the victim model");
  add_common(train_cmd, train_common);
  add_train(train_cmd, train_flags);
  train_cmd->add_option("--out", train_out, "model file")->required();

  // gen-patch
  Common gen_common;
  AttackFlags gen_flags;
  std::string gen_model, gen_out;
  auto* gen_cmd = app.add_subcommand("gen-patch", "optimize a universal patch");
  add_common(gen_cmd, gen_common);
  add_attack(gen_cmd, gen_flags);
  gen_cmd->add_option("--model", gen_model, "victim model file")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen_out, "patch artifact file")->required();

  // attack-eval
  Common eval_common;
  TrainFlags eval_train;
  std::string eval_model, eval_patch, eval_out;
  std::optional<std::uint64_t> regen_seed, transfer_seed;
  auto* eval_cmd = app.add_subcommand("attack-eval", "evaluate a patch artifact");
  add_common(eval_cmd, eval_common);
  add_train(eval_cmd, eval_train);
  eval_cmd->add_option("--model", eval_model, "victim model file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--patch", eval_patch, "patch artifact file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "report file")->required();
  auto* regen_opt = eval_cmd->add_option("--regen-seed", regen_seed, "redraw patch features with this seed");
  auto* transfer_opt =
      eval_cmd->add_option("--transfer-seed", transfer_seed, "retrain the victim with this seed and evaluate");
  regen_opt->excludes(transfer_opt);
  transfer_opt->excludes(regen_opt);

  // baseline
  Common base_common;
  std::string base_kind, base_model, base_out, base_calibrate;
  std::optional<Index> base_m;
  std::optional<double> base_frac, base_prob;
  auto* base_cmd = app.add_subcommand("baseline", "ablation baselines");
  add_common(base_cmd, base_common);
  base_cmd->add_option("--kind", base_kind, "no-edges or random-edges")
      ->required()
      ->check(CLI::IsMember({"no-edges", "random-edges"}));
  base_cmd->add_option("--model", base_model, "victim model file")->required()->check(CLI::ExistingFile);
  auto* bm = base_cmd->add_option("--patch-nodes", base_m, "patch size m");
  auto* bf = base_cmd->add_option("--patch-frac", base_frac, "patch size as a fraction of n");
  bm->excludes(bf);
  bf->excludes(bm);
  auto* bp = base_cmd->add_option("--prob", base_prob, "edge probability");
  auto* bc = base_cmd->add_option("--calibrate-from", base_calibrate, "match the edge count of this artifact")
                 ->check(CLI::ExistingFile);
  bp->excludes(bc);
  bc->excludes(bp);
  base_cmd->add_option("--out", base_out, "report file")->required();

  // sweep
  Common sweep_common;
  AttackFlags sweep_flags;
  std::string sweep_axis, sweep_values, sweep_seeds = "0", sweep_model, sweep_out;
  unsigned sweep_workers = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sweep to CSV");
  add_common(sweep_cmd, sweep_common);
  add_attack(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--axis", sweep_axis, "patch_fraction, radius or sample_rate")->required();
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated run seeds");
  sweep_cmd->add_option("--workers", sweep_workers, "concurrent runs");
  sweep_cmd->add_option("--model", sweep_model, "victim model file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out", sweep_out, "CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    if (*convert_cmd) {
      const auto s = guap::convert(conv_format, conv_src, conv_dst, conv_seed.value_or(0));
      std::ostringstream msg;
      msg << "converted " << s.format << " '" << s.name << "': n=" << s.nodes << " edges=" << s.edges
          << " train=" << s.train << " test=" << s.test << " dropped_edges=" << s.dropped_edges
          << " self_loops=" << s.self_loops << (s.features ? "" : " (no features.txt)") << " -> " << conv_dst;
      log(msg.str());
      return kOk;
    }

    if (*train_cmd) {
      RunConfig cfg = resolve(train_common, &train_flags, nullptr);
      const Graph g = load(cfg);
      TrainTrace trace;
      const GcnParams p = train(g, cfg.train, &trace);
      ModelRecord rec{cfg.dataset, p, cfg.train, accuracy(clean_probabilities(g, p), g.labels, g.test_nodes())};
      save_model(rec, train_out);
      std::ostringstream msg;
      msg << "trained: loss " << trace.loss.front() << " -> " << trace.loss.back() << ", test accuracy "
          << rec.acc_test << " -> " << train_out;
      log(msg.str());
      return kOk;
    }

    if (*gen_cmd) {
      RunConfig cfg = resolve(gen_common, nullptr, &gen_flags);
      const Graph g = load(cfg);
      const GcnParams p = load_params(gen_model, g);
      GuapHooks hooks;
      hooks.on_epoch = [&](const EpochRecord& r) {
        std::ostringstream msg;
        msg << "epoch " << r.epoch << ": asr_train=" << r.asr_train << " igp=" << r.igp_invocations
            << " edges=" << r.patch_edges;
        log(msg.str());
      };
      hooks.on_degenerate = [](Index node, int epoch) {
        log("warning: degenerate gradient at node " + std::to_string(node) + " in epoch " + std::to_string(epoch));
      };
      PatchArtifact art = generate_patch(g, p, cfg.attack, cfg.seed, hooks);
      art.dataset = cfg.dataset;
      save_patch(art, gen_out);
      log("best epoch " + std::to_string(art.best_epoch) + " (asr_train " + std::to_string(art.best_asr) + ") -> " +
          gen_out);
      return kOk;
    }

    if (*eval_cmd) {
      RunConfig cfg = resolve(eval_common, &eval_train, nullptr);
      const Graph g = load(cfg);
      const PatchArtifact art = load_patch(eval_patch);
      EvalReport r;
      if (transfer_seed) {
        r = transfer_retrain_check(art, g, cfg.train, *transfer_seed);
      } else {
        if (eval_model.empty()) throw ConfigError("attack-eval needs --model (or --transfer-seed)");
        const GcnParams p = load_params(eval_model, g);
        r = regen_seed ? regenerate_features_eval(art, g, p, *regen_seed) : evaluate_patch(art, g, p);
      }
      finish_report(r, cfg, eval_out, start);
      return kOk;
    }

    if (*base_cmd) {
      RunConfig cfg = resolve(base_common, nullptr, nullptr);
      const Graph g = load(cfg);
      const GcnParams p = load_params(base_model, g);
      Index m;
      if (base_m) {
        m = *base_m;
      } else {
        AttackHyper h;
        if (base_frac) h.patch_fraction = *base_frac;
        m = h.patch_size(g.num_nodes());
      }
      EvalReport r;
      if (base_kind == "no-edges") {
        if (base_prob || !base_calibrate.empty()) throw ConfigError("--prob/--calibrate-from apply to random-edges only");
        r = baseline_no_edges(g, p, m, cfg.seed);
      } else {
        double prob;
        if (!base_calibrate.empty()) {
          const PatchArtifact ref = load_patch(base_calibrate);
          const Index edges = patch_edge_count(ref.adjacency(g));
          prob = calibrated_edge_probability(edges, g.num_nodes(), m);
          log("calibrated to " + std::to_string(edges) + " edges: p=" + text::format_double(prob));
        } else if (base_prob) {
          prob = *base_prob;
        } else {
          throw ConfigError("random-edges needs --prob or --calibrate-from");
        }
        r = baseline_random_edges(g, p, m, prob, cfg.seed);
      }
      finish_report(r, cfg, base_out, start);
      return kOk;
    }

    if (*sweep_cmd) {
      RunConfig cfg = resolve(sweep_common, nullptr, &sweep_flags);
      const Graph g = load(cfg);
      const GcnParams p = load_params(sweep_model, g);
      std::vector<std::uint64_t> seeds;
      for (double s : parse_values(sweep_seeds)) {
        if (s < 0 || s != static_cast<double>(static_cast<std::uint64_t>(s)))
          throw ConfigError("seeds must be nonnegative integers");
        seeds.push_back(static_cast<std::uint64_t>(s));
      }
      const auto rows = sweep(g, p, cfg.attack, parse_sweep_axis(sweep_axis), parse_values(sweep_values), seeds,
                              sweep_workers);
      write_sweep_csv(rows, sweep_out);
      log("wrote " + std::to_string(rows.size()) + " sweep rows -> " + sweep_out);
      return kOk;
    }
  } catch (const ConfigError& e) {
    log(std::string("error: ") + e.what());
    return kUsage;
  } catch (const InvalidHyperparameter& e) {
    log(std::string("error: ") + e.what());
    return kUsage;
  } catch (const IoError& e) {
    log(std::string("error: ") + e.what());
    return kIo;
  } catch (const Error& e) {
    log(std::string("error: ") + e.what());
    return kData;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return kFailure;
  }
  return kFailure;
}
