#pragma once

// Dataset files, model/patch/report persistence and sweep tables.
//
// Dataset directory layout:
//   nodes.tsv     <id>\t<label>\t<train|test|other>
//   edges.tsv     <id>\t<id>            (undirected)
//   features.txt  one row of d reals per node, in nodes.tsv order (optional)

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "guap/artifact.hpp"
#include "guap/errors.hpp"
#include "guap/gcn.hpp"
#include "guap/graph.hpp"
#include "guap/text_format.hpp"

namespace guap {

struct DatasetDescriptor {
  std::string name;
  std::filesystem::path root;
  std::optional<bool> has_binary_features;
  std::optional<Index> expected_nodes;
  std::optional<Index> expected_edges;
  std::optional<int> expected_classes;
  std::optional<Index> expected_train;
  std::optional<Index> expected_test;
  bool largest_component = true;  // reduce to the LCC before validation
};

/// Descriptors for the benchmark graphs. Cora and Citeseer are used whole
/// (their reference counts describe the full graphs); Pol.Blogs is reduced
/// to its largest component. Citeseer's reference edge count includes 124
/// self loops, which the loader drops.
inline DatasetDescriptor builtin_descriptor(const std::string& name, const std::filesystem::path& root) {
  DatasetDescriptor d;
  d.name = name;
  d.root = root;
  if (name == "cora") {
    d.has_binary_features = true;
    d.expected_nodes = 2708;
    d.expected_edges = 5278;
    d.expected_classes = 7;
    d.expected_train = 140;
    d.expected_test = 1000;
    d.largest_component = false;
  } else if (name == "citeseer") {
    d.has_binary_features = true;
    d.expected_nodes = 3327;
    d.expected_edges = 4552;
    d.expected_classes = 6;
    d.expected_train = 120;
    d.expected_test = 1000;
    d.largest_component = false;
  } else if (name == "polblogs") {
    d.expected_nodes = 1222;
    d.expected_edges = 16714;
    d.expected_classes = 2;
    d.largest_component = true;
  } else {
    throw ConfigError("unknown dataset '" + name + "' (expected cora, citeseer or polblogs)");
  }
  return d;
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

inline bool next_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] != '#') return true;
  }
  return false;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return in;
}

}  // namespace detail

/// Reads a dataset directory, optionally reduces it to its largest
/// connected component, and checks the descriptor's expectations.
inline Graph load_dataset(const DatasetDescriptor& desc) {
  const auto nodes_path = desc.root / "nodes.tsv";
  const auto edges_path = desc.root / "edges.tsv";
  const auto features_path = desc.root / "features.txt";
  std::string line;

  std::unordered_map<std::string, Index> ids;
  std::vector<int> labels;
  std::vector<Split> split;
  {
    auto in = detail::open_input(nodes_path);
    std::size_t lineno = 0;
    while (detail::next_line(in, line, lineno)) {
      const auto f = detail::split_tabs(line);
      if (f.size() < 2 || f[1].empty()) throw ParseError(nodes_path.string(), lineno, "missing label");
      if (f.size() < 3 || f[2].empty()) throw ParseError(nodes_path.string(), lineno, "missing split tag");
      if (f.size() > 3) throw ParseError(nodes_path.string(), lineno, "too many fields");
      std::int64_t y;
      if (!text::parse_int(f[1], y) || y < 0) throw ParseError(nodes_path.string(), lineno, "bad label '" + f[1] + "'");
      Split s;
      if (f[2] == "train") s = Split::kTrain;
      else if (f[2] == "test") s = Split::kTest;
      else if (f[2] == "other") s = Split::kOther;
      else throw ParseError(nodes_path.string(), lineno, "bad split tag '" + f[2] + "'");
      if (!ids.emplace(f[0], static_cast<Index>(labels.size())).second)
        throw ParseError(nodes_path.string(), lineno, "duplicate node id '" + f[0] + "'");
      labels.push_back(static_cast<int>(y));
      split.push_back(s);
    }
  }
  const Index n = static_cast<Index>(labels.size());
  if (n == 0) throw EmptyGraph(nodes_path.string() + ": no nodes");

  std::vector<std::pair<Index, Index>> edges;
  {
    auto in = detail::open_input(edges_path);
    std::size_t lineno = 0;
    while (detail::next_line(in, line, lineno)) {
      const auto tok = text::split_ws(line);
      if (tok.size() != 2) throw ParseError(edges_path.string(), lineno, "expected two node ids");
      Index ends[2];
      for (int k = 0; k < 2; ++k) {
        auto it = ids.find(std::string(tok[k]));
        if (it == ids.end())
          throw IntegrityError(edges_path.string() + ":" + std::to_string(lineno) + ": unknown node id '" +
                               std::string(tok[k]) + "'");
        ends[k] = it->second;
      }
      edges.emplace_back(ends[0], ends[1]);
    }
  }

  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(build_adjacency(n, edges));
  if (std::filesystem::exists(features_path)) {
    auto in = detail::open_input(features_path);
    std::vector<Eigen::Triplet<double>> trip;
    std::size_t lineno = 0;
    Index row = 0;
    Index dim = -1;
    while (detail::next_line(in, line, lineno)) {
      const auto tok = text::split_ws(line);
      if (dim < 0) dim = static_cast<Index>(tok.size());
      if (static_cast<Index>(tok.size()) != dim)
        throw ParseError(features_path.string(), lineno,
                         "expected " + std::to_string(dim) + " values, found " + std::to_string(tok.size()));
      if (row >= n) throw ParseError(features_path.string(), lineno, "more feature rows than nodes");
      for (Index c = 0; c < dim; ++c) {
        double v;
        if (!text::parse_double(tok[c], v)) throw ParseError(features_path.string(), lineno, "bad number");
        if (v != 0.0) trip.emplace_back(row, c, v);
      }
      ++row;
    }
    if (row != n)
      throw ParseError(features_path.string(), lineno,
                       "found " + std::to_string(row) + " feature rows for " + std::to_string(n) + " nodes");
    auto x = std::make_shared<SparseMatrix>(n, std::max<Index>(dim, 0));
    x->setFromTriplets(trip.begin(), trip.end());
    x->makeCompressed();
    g.features = std::move(x);
  } else {
    auto x = std::make_shared<SparseMatrix>(n, n);
    x->setIdentity();
    g.features = std::move(x);
  }

  int max_label = 0;
  for (int y : labels) max_label = std::max(max_label, y);
  g.num_classes = desc.expected_classes.value_or(max_label + 1);
  g.labels = std::move(labels);
  g.split = std::move(split);
  validate(g);

  if (desc.largest_component) g = largest_connected_component(g);

  auto expect = [&](const char* what, std::optional<Index> want, Index got) {
    if (want && *want != got)
      throw ValidationError(desc.name + ": expected " + std::to_string(*want) + " " + what + ", found " +
                            std::to_string(got));
  };
  expect("nodes", desc.expected_nodes, g.num_nodes());
  expect("edges", desc.expected_edges, g.num_edges());
  expect("train nodes", desc.expected_train, static_cast<Index>(g.train_nodes().size()));
  expect("test nodes", desc.expected_test, static_cast<Index>(g.test_nodes().size()));
  if (desc.has_binary_features) {
    bool binary = true;
    for (Index k = 0; k < g.features->nonZeros(); ++k)
      if (g.features->valuePtr()[k] != 1.0) binary = false;
    if (binary != *desc.has_binary_features)
      throw ValidationError(desc.name + ": features are " + (binary ? "" : "not ") + "binary");
  }
  return g;
}

/// Writes a graph in dataset layout. `ids` default to 0..n-1; features are
/// skipped when `with_features` is false.
inline void write_dataset(const std::filesystem::path& dir, const Graph& g,
                          const std::vector<std::string>& ids = {}, bool with_features = true) {
  std::filesystem::create_directories(dir);
  const Index n = g.num_nodes();
  auto id = [&](Index v) { return ids.empty() ? std::to_string(v) : ids[static_cast<std::size_t>(v)]; };
  std::string buf;
  for (Index v = 0; v < n; ++v)
    buf += id(v) + '\t' + std::to_string(g.labels[v]) + '\t' + to_string(g.split[v]) + '\n';
  text::write_file((dir / "nodes.tsv").string(), buf);

  buf.clear();
  for (Index r = 0; r < n; ++r)
    for (SparseMatrix::InnerIterator it(*g.adjacency, r); it; ++it)
      if (it.col() > r) buf += id(r) + '\t' + id(it.col()) + '\n';
  text::write_file((dir / "edges.tsv").string(), buf);

  const auto fpath = dir / "features.txt";
  if (!with_features) {
    std::filesystem::remove(fpath);
    return;
  }
  buf.clear();
  const Index d = g.feature_dim();
  std::vector<double> row(static_cast<std::size_t>(d));
  for (Index r = 0; r < n; ++r) {
    std::fill(row.begin(), row.end(), 0.0);
    for (SparseMatrix::InnerIterator it(*g.features, r); it; ++it) row[it.col()] = it.value();
    for (Index c = 0; c < d; ++c) {
      if (c) buf += ' ';
      buf += text::format_double(row[c]);
    }
    buf += '\n';
  }
  text::write_file(fpath.string(), buf);
}

// ---------------------------------------------------------------------------
// Models

struct ModelRecord {
  std::string dataset;
  GcnParams params;
  TrainConfig config;
  double acc_test = 0.0;
};

inline std::string format_model(const ModelRecord& m) {
  text::Writer w("model");
  w.field("dataset", m.dataset)
      .field("hidden", static_cast<std::int64_t>(m.config.hidden))
      .field("learning_rate", m.config.learning_rate)
      .field("weight_decay", m.config.weight_decay)
      .field("epochs", m.config.epochs)
      .field("seed", m.config.seed)
      .field("acc_test", m.acc_test)
      .matrix("w0", m.params.w0)
      .matrix("w1", m.params.w1);
  return w.finish();
}

inline ModelRecord parse_model(const std::string& content, const std::string& source) {
  const auto doc = text::parse(content, "model", source);
  ModelRecord m;
  m.dataset = doc.get("dataset");
  m.config.hidden = doc.get_int("hidden");
  m.config.learning_rate = doc.get_double("learning_rate");
  m.config.weight_decay = doc.get_double("weight_decay");
  m.config.epochs = static_cast<int>(doc.get_int("epochs"));
  m.config.seed = doc.get_uint("seed");
  m.acc_test = doc.get_double("acc_test");
  m.params.w0 = doc.matrix("w0");
  m.params.w1 = doc.matrix("w1");
  if (m.params.w0.cols() != m.params.w1.rows() || m.params.w0.cols() != m.config.hidden)
    throw ParseError(source, 0, "weight shapes are inconsistent");
  if (!m.params.finite()) throw ParseError(source, 0, "non-finite weights");
  return m;
}

inline void save_model(const ModelRecord& m, const std::string& path) { text::write_file(path, format_model(m)); }
inline ModelRecord load_model(const std::string& path) { return parse_model(text::read_file(path), path); }

// ---------------------------------------------------------------------------
// Patch artifacts

inline std::string format_patch(const PatchArtifact& a) {
  const AttackHyper& h = a.hyper;
  text::Writer w("artifact");
  w.field("dataset", a.dataset)
      .field("n", static_cast<std::int64_t>(a.n))
      .field("m", static_cast<std::int64_t>(a.m()))
      .field("seed", a.seed)
      .field("best_epoch", a.best_epoch)
      .field("best_asr", a.best_asr)
      .field("hyper.max_epoch", h.max_epoch)
      .field("hyper.max_iter", h.max_iter)
      .field("hyper.radius", h.radius)
      .field("hyper.overshoot", h.overshoot)
      .field("hyper.step", h.step)
      .field("hyper.sample_rate", h.sample_rate)
      .field("hyper.binarize_threshold", h.binarize_threshold)
      .field("hyper.patch_fraction", h.patch_fraction)
      .field("hyper.patch_nodes", h.patch_nodes ? std::to_string(*h.patch_nodes) : std::string("none"))
      .field("hyper.clip", h.clip)
      .field("hyper.resume_from_binarized", h.resume_from_binarized)
      .field("hyper.projection", std::string(to_string(h.projection)))
      .field("hyper.deepfool_point", std::string(to_string(h.deepfool_point)))
      .field("hyper.deepfool_patch_norm", h.deepfool_patch_norm)
      .field("stats.binary", a.stats.binary)
      .matrix("stats.mean", a.stats.mean.transpose())
      .matrix("stats.variance", a.stats.variance.transpose())
      .matrix("x_patch", a.x_patch)
      .matrix("border", a.border)
      .matrix("patch_block", a.patch_block);
  Matrix trace(static_cast<Index>(a.trace.size()), 8);
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    const auto& r = a.trace[k];
    trace.row(static_cast<Index>(k)) << r.epoch, r.asr_train, static_cast<double>(r.targets_visited),
        static_cast<double>(r.igp_invocations), static_cast<double>(r.igp_iterations),
        static_cast<double>(r.igp_successes), static_cast<double>(r.degenerate_skips),
        static_cast<double>(r.patch_edges);
  }
  w.field("trace.columns", std::string(
                               "epoch asr_train targets_visited igp_invocations igp_iterations igp_successes "
                               "degenerate_skips patch_edges"))
      .matrix("trace", trace);
  return w.finish();
}

inline PatchArtifact parse_patch(const std::string& content, const std::string& source) {
  const auto doc = text::parse(content, "artifact", source);
  PatchArtifact a;
  a.dataset = doc.get("dataset");
  a.n = doc.get_int("n");
  a.seed = doc.get_uint("seed");
  a.best_epoch = static_cast<int>(doc.get_int("best_epoch"));
  a.best_asr = doc.get_double("best_asr");
  AttackHyper& h = a.hyper;
  h.max_epoch = static_cast<int>(doc.get_int("hyper.max_epoch"));
  h.max_iter = static_cast<int>(doc.get_int("hyper.max_iter"));
  h.radius = doc.get_double("hyper.radius");
  h.overshoot = doc.get_double("hyper.overshoot");
  h.step = doc.get_double("hyper.step");
  h.sample_rate = doc.get_double("hyper.sample_rate");
  h.binarize_threshold = doc.get_double("hyper.binarize_threshold");
  h.patch_fraction = doc.get_double("hyper.patch_fraction");
  if (doc.get("hyper.patch_nodes") != "none") h.patch_nodes = doc.get_int("hyper.patch_nodes");
  h.clip = doc.get_bool("hyper.clip");
  h.resume_from_binarized = doc.get_bool("hyper.resume_from_binarized");
  try {
    h.projection = parse_projection(doc.get("hyper.projection"));
    h.deepfool_point = parse_deepfool_point(doc.get("hyper.deepfool_point"));
  } catch (const ConfigError& e) {
    throw ParseError(source, 0, e.what());
  }
  h.deepfool_patch_norm = doc.get_bool("hyper.deepfool_patch_norm");
  a.stats.binary = doc.get_bool("stats.binary");
  a.stats.mean = doc.matrix("stats.mean").transpose();
  a.stats.variance = doc.matrix("stats.variance").transpose();
  a.x_patch = doc.matrix("x_patch");
  a.border = doc.matrix("border");
  a.patch_block = doc.matrix("patch_block");
  const Index m = doc.get_int("m");
  if (a.patch_block.rows() != m || a.patch_block.cols() != m || a.border.rows() != a.n || a.border.cols() != m ||
      a.x_patch.rows() != m)
    throw ParseError(source, 0, "patch block shapes are inconsistent");
  const Matrix& trace = doc.matrix("trace");
  if (trace.cols() != 8) throw ParseError(source, 0, "trace must have 8 columns");
  for (Index k = 0; k < trace.rows(); ++k) {
    EpochRecord r;
    r.epoch = static_cast<int>(trace(k, 0));
    r.asr_train = trace(k, 1);
    r.targets_visited = static_cast<Index>(trace(k, 2));
    r.igp_invocations = static_cast<Index>(trace(k, 3));
    r.igp_iterations = static_cast<Index>(trace(k, 4));
    r.igp_successes = static_cast<Index>(trace(k, 5));
    r.degenerate_skips = static_cast<Index>(trace(k, 6));
    r.patch_edges = static_cast<Index>(trace(k, 7));
    a.trace.push_back(r);
  }
  return a;
}

inline void save_patch(const PatchArtifact& a, const std::string& path) { text::write_file(path, format_patch(a)); }
inline PatchArtifact load_patch(const std::string& path) { return parse_patch(text::read_file(path), path); }

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline Matrix outcome_matrix(const std::vector<AttackOutcome>& outcomes) {
  Matrix m(static_cast<Index>(outcomes.size()), 3);
  for (std::size_t k = 0; k < outcomes.size(); ++k)
    m.row(static_cast<Index>(k)) << static_cast<double>(outcomes[k].node), outcomes[k].clean_pred,
        outcomes[k].attacked_pred;
  return m;
}

inline std::vector<AttackOutcome> outcome_list(const Matrix& m, const std::string& source) {
  if (m.rows() > 0 && m.cols() != 3) throw ParseError(source, 0, "outcome matrices have 3 columns");
  std::vector<AttackOutcome> out;
  for (Index k = 0; k < m.rows(); ++k)
    out.push_back({static_cast<Index>(m(k, 0)), static_cast<int>(m(k, 1)), static_cast<int>(m(k, 2))});
  return out;
}

}  // namespace detail

/// Report text without the wall-clock time, which lives in a sidecar so the
/// primary output is reproducible byte for byte.
inline std::string format_report(const EvalReport& r) {
  text::Writer w("report");
  w.field("dataset", r.dataset)
      .field("method", r.method)
      .field("seed", r.seed)
      .field("m", static_cast<std::int64_t>(r.m))
      .field("patch_edges", static_cast<std::int64_t>(r.patch_edges))
      .field("asr_train", r.asr_train)
      .field("asr_test", r.asr_test)
      .field("acc_clean", r.acc_clean)
      .field("acc_patched", r.acc_patched)
      .field("delta_acc", r.delta_acc);
  for (std::size_t k = 0; k < r.warnings.size(); ++k) w.field("warning." + std::to_string(k), r.warnings[k]);
  for (const auto& [key, value] : r.config) w.field("config." + key, value);
  w.field("outcome.columns", std::string("node clean_pred attacked_pred"))
      .matrix("outcomes.train", detail::outcome_matrix(r.train_outcomes))
      .matrix("outcomes.test", detail::outcome_matrix(r.test_outcomes));
  return w.finish();
}

inline EvalReport parse_report(const std::string& content, const std::string& source) {
  const auto doc = text::parse(content, "report", source);
  EvalReport r;
  r.dataset = doc.get("dataset");
  r.method = doc.get("method");
  r.seed = doc.get_uint("seed");
  r.m = doc.get_int("m");
  r.patch_edges = doc.get_int("patch_edges");
  r.asr_train = doc.get_double("asr_train");
  r.asr_test = doc.get_double("asr_test");
  r.acc_clean = doc.get_double("acc_clean");
  r.acc_patched = doc.get_double("acc_patched");
  r.delta_acc = doc.get_double("delta_acc");
  for (const auto& [key, value] : doc.fields) {
    if (key.rfind("warning.", 0) == 0) r.warnings.push_back(value);
    if (key.rfind("config.", 0) == 0) r.config.emplace_back(key.substr(7), value);
  }
  r.train_outcomes = detail::outcome_list(doc.matrix("outcomes.train"), source);
  r.test_outcomes = detail::outcome_list(doc.matrix("outcomes.test"), source);
  return r;
}

inline void write_report(const EvalReport& r, const std::string& path) {
  text::write_file(path, format_report(r));
  text::write_file(path + ".meta", "wall_seconds " + text::format_double(r.wall_seconds) + "\n");
}

inline EvalReport read_report(const std::string& path) {
  EvalReport r = parse_report(text::read_file(path), path);
  std::ifstream meta(path + ".meta");
  std::string key;
  double seconds = 0.0;
  if (meta >> key >> seconds && key == "wall_seconds") r.wall_seconds = seconds;
  return r;
}

// ---------------------------------------------------------------------------
// Sweep tables

inline std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "axis,value,runs,asr_train,asr_test,delta_acc,patch_edges,igp_invocations\n";
  for (const auto& r : rows) {
    out += r.axis + ',' + text::format_double(r.value) + ',' + std::to_string(r.runs) + ',' +
           text::format_double(r.asr_train) + ',' + text::format_double(r.asr_test) + ',' +
           text::format_double(r.delta_acc) + ',' + text::format_double(r.patch_edges) + ',' +
           text::format_double(r.igp_invocations) + '\n';
  }
  return out;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  text::write_file(path, format_sweep_csv(rows));
}

}  // namespace guap
