#pragma once

// Line-oriented structured text used for models, patch artifacts and
// reports:
//
//   guap-<kind> v1
//   <key> <value...>
//   matrix <name> <rows> <cols>
//   <cols numbers>            (rows lines)
//   end
//
// Numbers are written in shortest round-trip form, so a save/load cycle is
// bit-exact.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "guap/errors.hpp"
#include "guap/graph.hpp"

namespace guap::text {

inline constexpr int kVersion = 1;

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_int(std::string_view s, std::int64_t& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

class Writer {
 public:
  explicit Writer(const std::string& kind) { out_ << "guap-" << kind << " v" << kVersion << '\n'; }

  Writer& field(const std::string& key, const std::string& value) {
    out_ << key << ' ' << value << '\n';
    return *this;
  }
  Writer& field(const std::string& key, double value) { return field(key, format_double(value)); }
  Writer& field(const std::string& key, std::int64_t value) { return field(key, std::to_string(value)); }
  Writer& field(const std::string& key, int value) { return field(key, std::to_string(value)); }
  Writer& field(const std::string& key, std::uint64_t value) { return field(key, std::to_string(value)); }
  Writer& field(const std::string& key, bool value) { return field(key, std::string(value ? "true" : "false")); }

  template <typename Derived>
  Writer& matrix(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
    out_ << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        if (c) out_ << ' ';
        out_ << format_double(m(r, c));
      }
      out_ << '\n';
    }
    return *this;
  }

  std::string finish() {
    out_ << "end\n";
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

/// Parsed document. Field order is preserved; keys are unique.
class Document {
 public:
  std::vector<std::pair<std::string, std::string>> fields;
  std::map<std::string, Matrix> matrices;
  std::string source;

  bool has(const std::string& key) const { return find(key) != nullptr; }

  const std::string& get(const std::string& key) const {
    if (const auto* v = find(key)) return *v;
    throw ParseError(source, 0, "missing field '" + key + "'");
  }
  double get_double(const std::string& key) const {
    double v;
    if (!parse_double(get(key), v)) throw ParseError(source, 0, "field '" + key + "' is not a number");
    return v;
  }
  std::int64_t get_int(const std::string& key) const {
    std::int64_t v;
    if (!parse_int(get(key), v)) throw ParseError(source, 0, "field '" + key + "' is not an integer");
    return v;
  }
  std::uint64_t get_uint(const std::string& key) const {
    std::uint64_t v;
    const std::string& s = get(key);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ParseError(source, 0, "field '" + key + "' is not an unsigned integer");
    return v;
  }
  bool get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ParseError(source, 0, "field '" + key + "' is not a boolean");
  }
  const Matrix& matrix(const std::string& name) const {
    auto it = matrices.find(name);
    if (it == matrices.end()) throw ParseError(source, 0, "missing matrix '" + name + "'");
    return it->second;
  }

 private:
  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : fields)
      if (k == key) return &v;
    return nullptr;
  }
};

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

/// Parses a document of the given kind. A different kind or version raises
/// UnsupportedFormat; any structural problem raises ParseError.
inline Document parse(const std::string& content, const std::string& kind, const std::string& source) {
  Document doc;
  doc.source = source;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;

  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next()) throw ParseError(source, 0, "empty document");
  {
    const auto head = split_ws(line);
    if (head.size() != 2 || head[0].substr(0, 5) != "guap-" || head[1].substr(0, 1) != "v")
      throw ParseError(source, lineno, "missing guap header");
    if (head[0] != "guap-" + kind)
      throw UnsupportedFormat(source + ": expected guap-" + kind + ", found " + std::string(head[0]));
    if (head[1] != "v" + std::to_string(kVersion))
      throw UnsupportedFormat(source + ": unsupported version " + std::string(head[1]));
  }

  bool ended = false;
  while (next()) {
    if (line.empty()) continue;
    if (line == "end") {
      ended = true;
      break;
    }
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "matrix") {
      std::int64_t rows, cols;
      if (tok.size() != 4 || !parse_int(tok[2], rows) || !parse_int(tok[3], cols) || rows < 0 || cols < 0)
        throw ParseError(source, lineno, "bad matrix header");
      const std::string name(tok[1]);
      if (doc.matrices.count(name)) throw ParseError(source, lineno, "duplicate matrix '" + name + "'");
      Matrix m(rows, cols);
      for (std::int64_t r = 0; r < rows; ++r) {
        if (!next()) throw ParseError(source, lineno, "truncated matrix '" + name + "'");
        const auto vals = split_ws(line);
        if (static_cast<std::int64_t>(vals.size()) != cols)
          throw ParseError(source, lineno,
                           "matrix '" + name + "' row has " + std::to_string(vals.size()) + " values, expected " +
                               std::to_string(cols));
        for (std::int64_t c = 0; c < cols; ++c)
          if (!parse_double(vals[c], m(r, c))) throw ParseError(source, lineno, "bad number in matrix '" + name + "'");
      }
      doc.matrices.emplace(name, std::move(m));
      continue;
    }
    const std::string key(tok[0]);
    const auto pos = line.find(tok[0]) + tok[0].size();
    std::string value = pos < line.size() ? line.substr(pos + 1) : std::string();
    if (doc.has(key)) throw ParseError(source, lineno, "duplicate field '" + key + "'");
    doc.fields.emplace_back(key, std::move(value));
  }
  if (!ended) throw ParseError(source, lineno, "truncated document (no end marker)");
  return doc;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace guap::text
