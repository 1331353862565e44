#pragma once

// Minimal reader for the protocol-2 pickles of the Planetoid citation
// datasets: numpy arrays, scipy CSR matrices and dict-of-lists graphs. Any
// callable outside that set is refused.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "guap/errors.hpp"

namespace guap::pickle {

struct Object;
using Ref = std::shared_ptr<Object>;

enum class Kind { kNone, kBool, kInt, kBytes, kTuple, kList, kDict, kGlobal, kDtype, kArray, kInstance };

struct Object {
  Kind kind = Kind::kNone;
  std::int64_t integer = 0;  // kInt, kBool
  std::string text;          // kBytes; kGlobal "module name"; kDtype descriptor; kInstance class
  std::vector<Ref> items;    // kTuple, kList
  std::vector<std::pair<Ref, Ref>> entries;  // kDict; kInstance attribute dict

  // kArray
  std::vector<std::int64_t> shape;
  std::string dtype;  // e.g. "<i4", "<f8"
  std::string data;   // raw C-order bytes

  const Ref* attr(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k->kind == Kind::kBytes && k->text == key) return &v;
    return nullptr;
  }
};

inline Ref make(Kind k) {
  auto o = std::make_shared<Object>();
  o->kind = k;
  return o;
}

inline Ref make_int(std::int64_t v) {
  auto o = make(Kind::kInt);
  o->integer = v;
  return o;
}

inline Ref make_bytes(std::string s) {
  auto o = make(Kind::kBytes);
  o->text = std::move(s);
  return o;
}

class Reader {
 public:
  Reader(std::string bytes, std::string source) : buf_(std::move(bytes)), source_(std::move(source)) {}

  Ref load() {
    while (true) {
      const auto op = static_cast<unsigned char>(byte());
      switch (op) {
        case 0x80: byte(); break;  // PROTO
        case 'c': {                // GLOBAL
          auto g = make(Kind::kGlobal);
          const std::string module = line();
          g->text = module + " " + line();
          push(g);
          break;
        }
        case 'q': memo_[static_cast<unsigned char>(byte())] = top(); break;  // BINPUT
        case 'r': memo_[u32()] = top(); break;                              // LONG_BINPUT
        case 'h': push(memo_at(static_cast<unsigned char>(byte()))); break;  // BINGET
        case 'j': push(memo_at(u32())); break;                              // LONG_BINGET
        case ')': push(make(Kind::kTuple)); break;                          // EMPTY_TUPLE
        case '}': push(make(Kind::kDict)); break;                           // EMPTY_DICT
        case ']': push(make(Kind::kList)); break;                           // EMPTY_LIST
        case '(': marks_.push_back(stack_.size()); break;                   // MARK
        case 'N': push(make(Kind::kNone)); break;
        case 0x88: push(make_bool(true)); break;
        case 0x89: push(make_bool(false)); break;
        case 'K': push(make_int(static_cast<unsigned char>(byte()))); break;
        case 'M': push(make_int(u16())); break;
        case 'J': push(make_int(static_cast<std::int32_t>(u32()))); break;
        case 'U': push(make_bytes(take(static_cast<unsigned char>(byte())))); break;
        case 'T': push(make_bytes(take(u32()))); break;
        case 't': push(tuple_of(pop_mark())); break;
        case 0x85: push(tuple_of(pop_n(1))); break;
        case 0x86: push(tuple_of(pop_n(2))); break;
        case 0x87: push(tuple_of(pop_n(3))); break;
        case 'a': {  // APPEND
          Ref v = pop();
          list_target()->items.push_back(std::move(v));
          break;
        }
        case 'e': {  // APPENDS
          auto vs = pop_mark();
          auto& l = list_target()->items;
          l.insert(l.end(), vs.begin(), vs.end());
          break;
        }
        case 's': {  // SETITEM
          Ref v = pop();
          Ref k = pop();
          dict_target()->entries.emplace_back(std::move(k), std::move(v));
          break;
        }
        case 'u': {  // SETITEMS
          auto kv = pop_mark();
          if (kv.size() % 2) fail("odd SETITEMS");
          Ref d = dict_target();
          for (std::size_t k = 0; k < kv.size(); k += 2) d->entries.emplace_back(kv[k], kv[k + 1]);
          break;
        }
        case 'R': {  // REDUCE
          Ref args = pop();
          Ref fn = pop();
          push(reduce(fn, args));
          break;
        }
        case 0x81: {  // NEWOBJ
          Ref args = pop();
          Ref cls = pop();
          if (cls->kind != Kind::kGlobal || cls->text != "scipy.sparse.csr csr_matrix")
            fail("refusing to construct " + cls->text);
          auto o = make(Kind::kInstance);
          o->text = cls->text;
          push(o);
          break;
        }
        case 'b': {  // BUILD
          Ref state = pop();
          build(top(), state);
          break;
        }
        case '.': return pop();  // STOP
        default: fail("unsupported opcode 0x" + hex(op));
      }
    }
  }

 private:
  static Ref make_bool(bool b) {
    auto o = make(Kind::kBool);
    o->integer = b;
    return o;
  }
  static Ref tuple_of(std::vector<Ref> items) {
    auto t = make(Kind::kTuple);
    t->items = std::move(items);
    return t;
  }
  static std::string hex(unsigned v) {
    const char* digits = "0123456789abcdef";
    return {digits[(v >> 4) & 15], digits[v & 15]};
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw UnsupportedFormat(source_ + ": pickle offset " + std::to_string(pos_) + ": " + what);
  }

  char byte() {
    if (pos_ >= buf_.size()) fail("truncated");
    return buf_[pos_++];
  }
  std::string take(std::size_t n) {
    if (buf_.size() - pos_ < n) fail("truncated");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    const std::string s = take(4);
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[0])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[3])) << 24;
  }
  std::uint32_t u16() {
    const std::string s = take(2);
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[0])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[1])) << 8;
  }
  std::string line() {
    const auto end = buf_.find('\n', pos_);
    if (end == std::string::npos) fail("truncated");
    std::string s = buf_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return s;
  }

  void push(Ref r) { stack_.push_back(std::move(r)); }
  Ref pop() {
    if (stack_.empty()) fail("stack underflow");
    Ref r = std::move(stack_.back());
    stack_.pop_back();
    return r;
  }
  const Ref& top() {
    if (stack_.empty()) fail("stack underflow");
    return stack_.back();
  }
  std::vector<Ref> pop_n(std::size_t n) {
    if (stack_.size() < n) fail("stack underflow");
    std::vector<Ref> out(stack_.end() - static_cast<std::ptrdiff_t>(n), stack_.end());
    stack_.resize(stack_.size() - n);
    return out;
  }
  std::vector<Ref> pop_mark() {
    if (marks_.empty()) fail("missing mark");
    const std::size_t m = marks_.back();
    marks_.pop_back();
    return pop_n(stack_.size() - m);
  }
  Ref memo_at(std::uint32_t k) {
    auto it = memo_.find(k);
    if (it == memo_.end()) fail("unknown memo key");
    return it->second;
  }
  Ref list_target() {
    Ref l = top();
    if (l->kind != Kind::kList) fail("append to non-list");
    return l;
  }
  Ref dict_target() {
    Ref d = top();
    if (d->kind != Kind::kDict && d->kind != Kind::kInstance) fail("setitem on non-dict");
    return d;
  }

  Ref reduce(const Ref& fn, const Ref& args) {
    if (fn->kind != Kind::kGlobal || args->kind != Kind::kTuple) fail("bad REDUCE");
    if (fn->text == "numpy.core.multiarray _reconstruct") return make(Kind::kArray);
    if (fn->text == "numpy dtype") {
      if (args->items.empty() || args->items[0]->kind != Kind::kBytes) fail("bad dtype");
      auto d = make(Kind::kDtype);
      d->text = args->items[0]->text;
      return d;
    }
    if (fn->text == "collections defaultdict") return make(Kind::kDict);
    fail("refusing to call " + fn->text);
  }

  void build(const Ref& obj, const Ref& state) {
    switch (obj->kind) {
      case Kind::kDtype: {
        // (version, byteorder, ...)
        if (state->kind != Kind::kTuple || state->items.size() < 2 || state->items[1]->kind != Kind::kBytes)
          fail("bad dtype state");
        const std::string& order = state->items[1]->text;
        obj->text = (order == "|" ? std::string("<") : order) + obj->text;
        break;
      }
      case Kind::kArray: {
        // (version, shape, dtype, fortran, raw)
        if (state->kind != Kind::kTuple || state->items.size() != 5) fail("bad ndarray state");
        const auto& s = state->items;
        if (s[1]->kind != Kind::kTuple || s[2]->kind != Kind::kDtype || s[4]->kind != Kind::kBytes)
          fail("bad ndarray state");
        if (s[3]->integer != 0) fail("fortran-ordered arrays are not supported");
        for (const auto& d : s[1]->items) obj->shape.push_back(d->integer);
        obj->dtype = s[2]->text;
        obj->data = s[4]->text;
        break;
      }
      case Kind::kInstance:
        if (state->kind != Kind::kDict) fail("bad instance state");
        obj->entries = state->entries;
        break;
      default: fail("BUILD on unsupported object");
    }
  }

  std::string buf_;
  std::string source_;
  std::size_t pos_ = 0;
  std::vector<Ref> stack_;
  std::vector<std::size_t> marks_;
  std::map<std::uint32_t, Ref> memo_;
};

inline Ref load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(bytes), path).load();
}

/// Array elements converted to double, C order.
inline std::vector<double> array_values(const Object& a) {
  if (a.kind != Kind::kArray) throw UnsupportedFormat("expected a numpy array");
  std::size_t count = 1;
  for (auto d : a.shape) count *= static_cast<std::size_t>(d);
  auto read = [&]<typename T>(T) {
    if (a.data.size() != count * sizeof(T)) throw UnsupportedFormat("array byte size mismatch");
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k) {
      T v;
      std::memcpy(&v, a.data.data() + k * sizeof(T), sizeof(T));
      out[k] = static_cast<double>(v);
    }
    return out;
  };
  if (a.dtype == "<i4") return read(std::int32_t{});
  if (a.dtype == "<i8") return read(std::int64_t{});
  if (a.dtype == "<f4") return read(float{});
  if (a.dtype == "<f8") return read(double{});
  throw UnsupportedFormat("unsupported dtype " + a.dtype);
}

}  // namespace guap::pickle
