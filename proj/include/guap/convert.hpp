#pragma once

// Converters from the common public distributions of the benchmark graphs
// to the dataset layout read by load_dataset:
//   linqs      <name>.content / <name>.cites      (Cora from LINQS)
//   planetoid  ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}
//   gml        a GML graph with a binary `value` node attribute (Pol.Blogs)

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "guap/errors.hpp"
#include "guap/graph.hpp"
#include "guap/io.hpp"
#include "guap/pickle.hpp"
#include "guap/rng.hpp"
#include "guap/text_format.hpp"

namespace guap {

namespace fs = std::filesystem;

struct ConvertSummary {
  std::string format;
  std::string name;
  Index nodes = 0;
  Index edges = 0;
  Index dropped_edges = 0;  // endpoints missing from the node list
  Index self_loops = 0;
  Index train = 0;
  Index test = 0;
  bool features = true;
};

struct SplitSpec {
  Index train_per_class = 20;
  Index test = 1000;
  std::uint64_t seed = 0;
};

namespace detail {

/// train_per_class nodes of each class, then `test` of the rest, drawn by
/// seeded shuffles; everything else is "other".
inline std::vector<Split> per_class_split(const std::vector<int>& labels, int k, const SplitSpec& plan) {
  const Index n = static_cast<Index>(labels.size());
  std::vector<Split> split(static_cast<std::size_t>(n), Split::kOther);
  for (int c = 0; c < k; ++c) {
    std::vector<Index> members;
    for (Index v = 0; v < n; ++v)
      if (labels[v] == c) members.push_back(v);
    rng::Stream stream(rng::mix(plan.seed, 0x7a1bULL, static_cast<std::uint64_t>(c)));
    rng::shuffle(std::span<Index>(members), stream);
    for (Index j = 0; j < std::min<Index>(plan.train_per_class, static_cast<Index>(members.size())); ++j)
      split[members[j]] = Split::kTrain;
  }
  std::vector<Index> rest;
  for (Index v = 0; v < n; ++v)
    if (split[v] != Split::kTrain) rest.push_back(v);
  rng::Stream stream(rng::mix(plan.seed, 0x7e57ULL));
  rng::shuffle(std::span<Index>(rest), stream);
  for (Index j = 0; j < std::min<Index>(plan.test, static_cast<Index>(rest.size())); ++j) split[rest[j]] = Split::kTest;
  return split;
}

inline fs::path find_one(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) return {};
  std::vector<fs::path> hits;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string fname = e.path().filename().string();
    if (fname.size() >= suffix.size() && fname.compare(fname.size() - suffix.size(), suffix.size(), suffix) == 0)
      hits.push_back(e.path());
  }
  std::sort(hits.begin(), hits.end());
  return hits.empty() ? fs::path{} : hits.front();
}

inline void fill_summary(ConvertSummary& s, const Graph& g) {
  s.nodes = g.num_nodes();
  s.edges = g.num_edges();
  s.train = static_cast<Index>(g.train_nodes().size());
  s.test = static_cast<Index>(g.test_nodes().size());
}

}  // namespace detail

/// LINQS layout: `<id> <f1..fd> <class>` rows and `<cited> <citing>` rows.
/// Classes are numbered in sorted name order; nodes keep file order.
inline ConvertSummary convert_linqs(const fs::path& src, const fs::path& dst, const SplitSpec& plan = {}) {
  const fs::path content = detail::find_one(src, ".content");
  const fs::path cites = detail::find_one(src, ".cites");
  if (content.empty() || cites.empty()) throw UnsupportedFormat(src.string() + ": no *.content/*.cites pair");

  std::vector<std::string> ids;
  std::vector<std::string> classes;
  std::vector<Eigen::Triplet<double>> trip;
  Index dim = -1;
  {
    std::ifstream in(content);
    if (!in) throw IoError("cannot open " + content.string());
    std::string line;
    std::size_t lineno = 0;
    while (detail::next_line(in, line, lineno)) {
      const auto tok = text::split_ws(line);
      if (tok.size() < 2) throw ParseError(content.string(), lineno, "expected id, features, class");
      const Index d = static_cast<Index>(tok.size()) - 2;
      if (dim < 0) dim = d;
      if (d != dim) throw ParseError(content.string(), lineno, "inconsistent feature count");
      const Index row = static_cast<Index>(ids.size());
      ids.emplace_back(tok.front());
      classes.emplace_back(tok.back());
      for (Index c = 0; c < d; ++c) {
        double v;
        if (!text::parse_double(tok[c + 1], v)) throw ParseError(content.string(), lineno, "bad feature value");
        if (v != 0.0) trip.emplace_back(row, c, v);
      }
    }
  }
  const Index n = static_cast<Index>(ids.size());
  if (n == 0) throw EmptyGraph(content.string() + ": no nodes");
  std::vector<std::string> names(classes);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::vector<int> labels;
  for (const auto& c : classes)
    labels.push_back(static_cast<int>(std::lower_bound(names.begin(), names.end(), c) - names.begin()));

  std::unordered_map<std::string, Index> index;
  for (Index v = 0; v < n; ++v) index.emplace(ids[v], v);
  ConvertSummary s;
  s.format = "linqs";
  s.name = content.stem().string();
  std::vector<std::pair<Index, Index>> edges;
  {
    std::ifstream in(cites);
    if (!in) throw IoError("cannot open " + cites.string());
    std::string line;
    std::size_t lineno = 0;
    while (detail::next_line(in, line, lineno)) {
      const auto tok = text::split_ws(line);
      if (tok.size() != 2) throw ParseError(cites.string(), lineno, "expected two ids");
      auto a = index.find(std::string(tok[0]));
      auto b = index.find(std::string(tok[1]));
      if (a == index.end() || b == index.end()) {
        ++s.dropped_edges;
        continue;
      }
      edges.emplace_back(a->second, b->second);
    }
  }

  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(build_adjacency(n, edges, &s.self_loops));
  auto x = std::make_shared<SparseMatrix>(n, dim);
  x->setFromTriplets(trip.begin(), trip.end());
  g.features = std::move(x);
  g.num_classes = static_cast<int>(names.size());
  g.labels = std::move(labels);
  g.split = detail::per_class_split(g.labels, g.num_classes, plan);
  write_dataset(dst, g, ids);
  detail::fill_summary(s, g);
  return s;
}

/// Planetoid pickles, assembled the way the reference GCN loader does it:
/// rows are allx then the test rows in sorted test-index order (with empty
/// rows for test indices missing from the file); train = the first |y|
/// rows, test = the listed test indices.
inline ConvertSummary convert_planetoid(const fs::path& src, const fs::path& dst) {
  const fs::path graph_file = detail::find_one(src, ".graph");
  const std::string gname = graph_file.filename().string();
  if (graph_file.empty() || gname.rfind("ind.", 0) != 0) throw UnsupportedFormat(src.string() + ": no ind.<name>.graph");
  const std::string name = gname.substr(4, gname.size() - 4 - 6);
  auto part = [&](const std::string& p) { return (src / ("ind." + name + "." + p)).string(); };

  auto dense = [](const pickle::Ref& o, const std::string& what) {
    if (o->kind != pickle::Kind::kArray || o->shape.size() != 2)
      throw UnsupportedFormat(what + ": expected a 2-d array");
    const auto vals = pickle::array_values(*o);
    Matrix m(o->shape[0], o->shape[1]);
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = vals[static_cast<std::size_t>(r * m.cols() + c)];
    return m;
  };
  auto csr = [](const pickle::Ref& o, const std::string& what) {
    if (o->kind != pickle::Kind::kInstance) throw UnsupportedFormat(what + ": expected a csr_matrix");
    const auto* shape = o->attr("_shape");
    const auto* indptr = o->attr("indptr");
    const auto* indices = o->attr("indices");
    const auto* data = o->attr("data");
    if (!shape || !indptr || !indices || !data || (*shape)->items.size() != 2)
      throw UnsupportedFormat(what + ": incomplete csr_matrix");
    const Index rows = (*shape)->items[0]->integer;
    const Index cols = (*shape)->items[1]->integer;
    const auto ptr = pickle::array_values(**indptr);
    const auto idx = pickle::array_values(**indices);
    const auto val = pickle::array_values(**data);
    if (static_cast<Index>(ptr.size()) != rows + 1 || idx.size() != val.size())
      throw UnsupportedFormat(what + ": inconsistent csr arrays");
    std::vector<Eigen::Triplet<double>> t;
    for (Index r = 0; r < rows; ++r)
      for (auto k = static_cast<std::size_t>(ptr[r]); k < static_cast<std::size_t>(ptr[r + 1]); ++k)
        t.emplace_back(r, static_cast<Index>(idx[k]), val[k]);
    SparseMatrix m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  };

  const SparseMatrix allx = csr(pickle::load_file(part("allx")), "allx");
  const SparseMatrix tx = csr(pickle::load_file(part("tx")), "tx");
  const Matrix ally = dense(pickle::load_file(part("ally")), "ally");
  const Matrix ty = dense(pickle::load_file(part("ty")), "ty");
  const Matrix y = dense(pickle::load_file(part("y")), "y");
  const pickle::Ref graph = pickle::load_file(part("graph"));
  if (graph->kind != pickle::Kind::kDict) throw UnsupportedFormat("graph: expected a dict of lists");

  std::vector<Index> test_order;
  {
    std::ifstream in(part("test.index"));
    if (!in) throw IoError("cannot open " + part("test.index"));
    std::string line;
    std::size_t lineno = 0;
    while (detail::next_line(in, line, lineno)) {
      std::int64_t v;
      if (!text::parse_int(line, v)) throw ParseError(part("test.index"), lineno, "bad index");
      test_order.push_back(v);
    }
  }
  if (test_order.size() != static_cast<std::size_t>(tx.rows()) || ty.rows() != tx.rows())
    throw UnsupportedFormat("test index count does not match tx/ty");
  std::vector<Index> test_sorted(test_order);
  std::sort(test_sorted.begin(), test_sorted.end());
  const Index lo = test_sorted.front();
  const Index span = test_sorted.back() - lo + 1;
  const Index n = allx.rows() + span;
  const Index d = allx.cols();
  const Index k = ally.cols();

  // Row r of the stacked [allx; tx_extended] matrix.
  std::vector<Index> stacked_of(static_cast<std::size_t>(n));
  for (Index v = 0; v < n; ++v) stacked_of[v] = v;
  // features[test_order[j]] = stacked[test_sorted[j]]
  for (std::size_t j = 0; j < test_order.size(); ++j) stacked_of[test_order[j]] = test_sorted[j];

  // tx row j lands at stacked row allx.rows() + (test_sorted[j] - lo).
  std::vector<Index> tx_row_of_stacked(static_cast<std::size_t>(n), -1);
  for (std::size_t j = 0; j < test_sorted.size(); ++j)
    tx_row_of_stacked[allx.rows() + (test_sorted[j] - lo)] = static_cast<Index>(j);

  std::vector<Eigen::Triplet<double>> ft;
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (Index v = 0; v < n; ++v) {
    const Index s = stacked_of[v];
    Eigen::RowVectorXd yrow = Eigen::RowVectorXd::Zero(k);
    if (s < allx.rows()) {
      for (SparseMatrix::InnerIterator it(allx, s); it; ++it) ft.emplace_back(v, it.col(), it.value());
      yrow = ally.row(s);
    } else if (const Index j = tx_row_of_stacked[s]; j >= 0) {
      for (SparseMatrix::InnerIterator it(tx, j); it; ++it) ft.emplace_back(v, it.col(), it.value());
      yrow = ty.row(j);
    }
    Index best = 0;
    yrow.maxCoeff(&best);  // all-zero rows map to class 0
    labels[v] = static_cast<int>(best);
  }

  std::vector<std::pair<Index, Index>> edges;
  for (const auto& [key, nbrs] : graph->entries) {
    if (key->kind != pickle::Kind::kInt || nbrs->kind != pickle::Kind::kList)
      throw UnsupportedFormat("graph: expected int keys and list values");
    for (const auto& w : nbrs->items) {
      if (w->kind != pickle::Kind::kInt) throw UnsupportedFormat("graph: non-integer neighbour");
      edges.emplace_back(key->integer, w->integer);
    }
  }

  ConvertSummary s;
  s.format = "planetoid";
  s.name = name;
  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(build_adjacency(n, edges, &s.self_loops));
  auto x = std::make_shared<SparseMatrix>(n, d);
  x->setFromTriplets(ft.begin(), ft.end());
  g.features = std::move(x);
  g.num_classes = static_cast<int>(k);
  g.labels = std::move(labels);
  g.split.assign(static_cast<std::size_t>(n), Split::kOther);
  for (Index v = 0; v < y.rows(); ++v) g.split[v] = Split::kTrain;
  for (Index v : test_sorted) g.split[v] = Split::kTest;
  write_dataset(dst, g);
  detail::fill_summary(s, g);
  return s;
}

namespace detail {

/// Tiny GML reader: nested `key [ ... ]` lists of `key value` pairs.
struct GmlNode {
  std::string key;
  std::string value;  // scalar value (quotes stripped)
  std::vector<GmlNode> children;
  bool is_list = false;

  const GmlNode* child(const std::string& k) const {
    for (const auto& c : children)
      if (c.key == k) return &c;
    return nullptr;
  }
};

class GmlParser {
 public:
  GmlParser(std::string text, std::string source) : s_(std::move(text)), source_(std::move(source)) {}

  GmlNode parse() {
    GmlNode root;
    root.is_list = true;
    parse_items(root, false);
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) { throw ParseError(source_, line_, what); }

  void skip() {
    while (p_ < s_.size()) {
      if (s_[p_] == '\n') ++line_;
      if (std::isspace(static_cast<unsigned char>(s_[p_]))) {
        ++p_;
      } else if (s_[p_] == '#') {
        while (p_ < s_.size() && s_[p_] != '\n') ++p_;
      } else {
        break;
      }
    }
  }

  std::string token() {
    skip();
    if (p_ >= s_.size()) fail("unexpected end of file");
    if (s_[p_] == '"') {
      const std::size_t start = ++p_;
      while (p_ < s_.size() && s_[p_] != '"') {
        if (s_[p_] == '\n') ++line_;
        ++p_;
      }
      if (p_ >= s_.size()) fail("unterminated string");
      return s_.substr(start, p_++ - start);
    }
    if (s_[p_] == '[' || s_[p_] == ']') return std::string(1, s_[p_++]);
    const std::size_t start = p_;
    while (p_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[p_])) && s_[p_] != '[' && s_[p_] != ']')
      ++p_;
    return s_.substr(start, p_ - start);
  }

  void parse_items(GmlNode& into, bool nested) {
    while (true) {
      skip();
      if (p_ >= s_.size()) {
        if (nested) fail("unbalanced '['");
        return;
      }
      if (s_[p_] == ']') {
        if (!nested) fail("unbalanced ']'");
        ++p_;
        return;
      }
      GmlNode item;
      item.key = token();
      skip();
      if (p_ < s_.size() && s_[p_] == '[') {
        ++p_;
        item.is_list = true;
        parse_items(item, true);
      } else {
        item.value = token();
      }
      into.children.push_back(std::move(item));
    }
  }

  std::string s_;
  std::string source_;
  std::size_t p_ = 0;
  std::size_t line_ = 1;
};

}  // namespace detail

/// GML graph with integer node ids and a binary `value` attribute used as
/// the label. Directions and duplicate edges collapse; the result is
/// reduced to its largest component. There are no node features: the
/// features file is omitted and the loader falls back to identity features.
/// The split takes `train_fraction` of the component as train (rounded to
/// nearest) and the rest as test.
inline ConvertSummary convert_gml(const fs::path& src, const fs::path& dst, double train_fraction = 0.099,
                                  std::uint64_t seed = 0) {
  fs::path file = fs::is_directory(src) ? detail::find_one(src, ".gml") : src;
  if (file.empty() || !fs::exists(file)) throw UnsupportedFormat(src.string() + ": no .gml file");
  const auto root = detail::GmlParser(text::read_file(file.string()), file.string()).parse();
  const detail::GmlNode* graph = root.child("graph");
  if (!graph || !graph->is_list) throw UnsupportedFormat(file.string() + ": no graph block");

  std::vector<std::string> ids;
  std::vector<int> labels;
  std::unordered_map<std::string, Index> index;
  std::vector<std::pair<Index, Index>> edges;
  ConvertSummary s;
  s.format = "gml";
  s.name = file.stem().string();
  for (const auto& item : graph->children) {
    if (item.key == "node") {
      const auto* id = item.child("id");
      const auto* value = item.child("value");
      if (!id) throw UnsupportedFormat(file.string() + ": node without id");
      std::int64_t y = 0;
      if (!value || !text::parse_int(value->value, y) || y < 0)
        throw UnsupportedFormat(file.string() + ": node " + id->value + " lacks an integer value label");
      index.emplace(id->value, static_cast<Index>(ids.size()));
      ids.push_back(id->value);
      labels.push_back(static_cast<int>(y));
    }
  }
  for (const auto& item : graph->children) {
    if (item.key != "edge") continue;
    const auto* a = item.child("source");
    const auto* b = item.child("target");
    if (!a || !b) throw UnsupportedFormat(file.string() + ": edge without endpoints");
    auto ia = index.find(a->value);
    auto ib = index.find(b->value);
    if (ia == index.end() || ib == index.end()) {
      ++s.dropped_edges;
      continue;
    }
    edges.emplace_back(ia->second, ib->second);
  }
  const Index n = static_cast<Index>(ids.size());
  if (n == 0) throw EmptyGraph(file.string() + ": no nodes");

  Graph g;
  g.adjacency = std::make_shared<SparseMatrix>(build_adjacency(n, edges, &s.self_loops));
  auto x = std::make_shared<SparseMatrix>(n, n);
  x->setIdentity();
  g.features = std::move(x);
  g.num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  g.labels = labels;
  g.split.assign(static_cast<std::size_t>(n), Split::kOther);

  // Keep ids aligned with the component's compacted node order.
  Index count = 0;
  const auto comp = connected_components(*g.adjacency, &count);
  g = largest_connected_component(g);
  if (g.num_nodes() != n) {
    std::vector<Index> sizes(static_cast<std::size_t>(count), 0);
    for (Index c : comp) ++sizes[c];
    const Index best = std::max_element(sizes.begin(), sizes.end()) - sizes.begin();
    std::vector<std::string> kept;
    for (Index v = 0; v < n; ++v)
      if (comp[v] == best) kept.push_back(ids[v]);
    ids = std::move(kept);
  }

  std::vector<Index> order(static_cast<std::size_t>(g.num_nodes()));
  for (Index v = 0; v < g.num_nodes(); ++v) order[v] = v;
  rng::Stream stream(rng::mix(seed, 0x9b1ULL));
  rng::shuffle(std::span<Index>(order), stream);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(g.num_nodes())));
  for (std::size_t j = 0; j < order.size(); ++j) g.split[order[j]] = j < n_train ? Split::kTrain : Split::kTest;

  write_dataset(dst, g, ids, false);
  detail::fill_summary(s, g);
  s.features = false;
  return s;
}

/// Detects the layout of `src`: a LINQS pair, Planetoid pickles or a GML
/// file. Unrecognized layouts raise UnsupportedFormat.
inline std::string detect_format(const fs::path& src) {
  if (fs::is_regular_file(src) && src.extension() == ".gml") return "gml";
  if (!fs::is_directory(src)) throw UnsupportedFormat(src.string() + ": not a directory or .gml file");
  if (!detail::find_one(src, ".content").empty() && !detail::find_one(src, ".cites").empty()) return "linqs";
  if (!detail::find_one(src, ".graph").empty()) return "planetoid";
  if (!detail::find_one(src, ".gml").empty()) return "gml";
  throw UnsupportedFormat(src.string() + ": unrecognized dataset layout");
}

inline ConvertSummary convert(const std::string& format, const fs::path& src, const fs::path& dst,
                              std::uint64_t seed = 0) {
  const std::string f = format == "auto" ? detect_format(src) : format;
  if (f == "linqs") {
    SplitSpec plan;
    plan.seed = seed;
    return convert_linqs(src, dst, plan);
  }
  if (f == "planetoid") return convert_planetoid(src, dst);
  if (f == "gml") return convert_gml(src, dst, 0.099, seed);
  throw UnsupportedFormat("unknown input format '" + format + "'");
}

}  // namespace guap
