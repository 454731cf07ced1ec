#pragma once

// Concrete hyperbolic groups: free groups, free products of cyclic groups and
// user-supplied confluent rewriting systems. Elements are normal-form words.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "common.hpp"

namespace hyperwalk {

using Letter = std::uint8_t;
using Word = std::vector<Letter>;

struct WordHash {
  std::size_t operator()(const Word& w) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (Letter c : w) {
      h ^= c + 1u;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h ^ (w.size() * 0x9e3779b97f4a7c15ULL));
  }
};

enum class ModelKind { Free, FreeProduct, Rewriting };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Free: return "free";
    case ModelKind::FreeProduct: return "free_product";
    case ModelKind::Rewriting: return "rewriting";
  }
  return "?";
}

class GroupModel;

// A group element, stored as its normal-form word.
class Element {
 public:
  Element() = default;

  const Word& word() const noexcept { return word_; }
  std::size_t length() const noexcept { return word_.size(); }
  bool is_identity() const noexcept { return word_.empty(); }
  std::uint64_t model_id() const noexcept { return model_id_; }

  friend bool operator==(const Element& a, const Element& b) {
    return a.model_id_ == b.model_id_ && a.word_ == b.word_;
  }
  friend bool operator<(const Element& a, const Element& b) { return a.word_ < b.word_; }

 private:
  friend class GroupModel;
  Element(Word w, std::uint64_t id) : word_(std::move(w)), model_id_(id) {}

  Word word_;
  std::uint64_t model_id_ = 0;
};

struct ElementHash {
  std::size_t operator()(const Element& e) const noexcept { return WordHash{}(e.word()); }
};

// One cyclic free factor: generator letter, its inverse letter (equal for an
// involution) and the order (0 for an infinite cyclic factor).
struct CyclicFactor {
  Letter gen;
  Letter inv;
  int order;
};

struct RewriteRule {
  Word lhs;
  Word rhs;
};

class GroupModel {
 public:
  // Free group on `rank` generators named a, b, c, ... with inverses A, B, C, ...
  static GroupModel free_group(int rank) {
    if (rank < 1 || rank > 13) throw ModelError("free group rank must be in [1, 13]");
    std::vector<std::string> names;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (int i = 0; i < rank; ++i) {
      std::string g(1, static_cast<char>('a' + i));
      std::string G(1, static_cast<char>('A' + i));
      names.push_back(g);
      names.push_back(G);
      pairs.emplace_back(g, G);
    }
    GroupModel m(ModelKind::Free, names, pairs);
    for (auto& f : m.factors_) f.order = 0;
    m.delta_ = 0.0;
    m.finish_free_product();
    m.label_ = "F" + std::to_string(rank);
    return m;
  }

  // Free product of cyclic groups. Each entry is (generator, inverse, order);
  // an involution uses the same name twice and order 2; order 0 means Z.
  struct FactorSpec {
    std::string gen;
    std::string inv;
    int order;
  };

  static GroupModel free_product(const std::vector<FactorSpec>& specs,
                                 std::optional<double> delta = std::nullopt) {
    std::vector<std::string> names;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& f : specs) {
      names.push_back(f.gen);
      if (f.inv != f.gen) names.push_back(f.inv);
      pairs.emplace_back(f.gen, f.inv);
    }
    GroupModel m(ModelKind::FreeProduct, names, pairs);
    for (std::size_t i = 0; i < specs.size(); ++i) m.factors_[i].order = specs[i].order;
    m.finish_free_product();
    m.delta_ = delta ? *delta : m.default_delta();
    std::string label;
    for (const auto& f : specs) {
      if (!label.empty()) label += "*";
      label += f.order == 0 ? "Z" : "Z" + std::to_string(f.order);
    }
    m.label_ = label;
    return m;
  }

  // Group given by a finite symmetric alphabet and a confluent, shortlex
  // decreasing rewriting system. Free cancellation x x^-1 -> 1 is implicit.
  static GroupModel rewriting(const std::vector<std::string>& names,
                              const std::vector<std::pair<std::string, std::string>>& inverse_pairs,
                              const std::vector<std::pair<std::string, std::string>>& rules,
                              double delta, std::size_t confluence_depth = 0) {
    GroupModel m(ModelKind::Rewriting, names, inverse_pairs);
    m.factors_.clear();
    m.delta_ = delta;
    for (const auto& [l, r] : rules) m.rules_.push_back({m.parse_word(l), m.parse_word(r)});
    for (Letter x = 0; x < m.names_.size(); ++x) {
      if (m.inverse_[x] == x) {
        m.rules_.push_back({Word{x, x}, Word{}});
      } else {
        m.rules_.push_back({Word{x, m.inverse_[x]}, Word{}});
      }
    }
    for (const auto& rule : m.rules_) {
      if (!shortlex_less(rule.rhs, rule.lhs)) {
        throw ModelError("rewriting rule " + m.format(rule.lhs) + " -> " + m.format(rule.rhs) +
                         " is not shortlex decreasing");
      }
    }
    m.check_confluence(confluence_depth);
    m.label_ = "rewriting";
    return m;
  }

  // Built-in models by name: "F<k>", "Z2*Z3", or any '*'-joined list of
  // "Z" / "Z<m>" factors.
  static GroupModel builtin(const std::string& name) {
    if (name.size() >= 2 && name[0] == 'F' &&
        std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(c); })) {
      return free_group(std::stoi(name.substr(1)));
    }
    std::vector<FactorSpec> specs;
    std::stringstream ss(name);
    std::string part;
    const std::string involutions = "suvwxyz";
    const std::string gens = "tpqrmnk";
    std::size_t next_inv = 0, next_gen = 0;
    while (std::getline(ss, part, '*')) {
      if (part.empty() || part[0] != 'Z') throw ModelError("unknown built-in model: " + name);
      int order = part.size() == 1 ? 0 : std::stoi(part.substr(1));
      if (order == 1 || order < 0) throw ModelError("cyclic factor order must be 0 or >= 2");
      if (order == 2) {
        if (next_inv >= involutions.size()) throw ModelError("too many factors: " + name);
        std::string g(1, involutions[next_inv++]);
        specs.push_back({g, g, 2});
      } else {
        if (next_gen >= gens.size()) throw ModelError("too many factors: " + name);
        char c = gens[next_gen++];
        specs.push_back({std::string(1, c),
                         std::string(1, static_cast<char>(std::toupper(c))), order});
      }
    }
    if (specs.empty()) throw ModelError("unknown built-in model: " + name);
    auto m = free_product(specs);
    m.label_ = name;
    return m;
  }

  ModelKind kind() const noexcept { return kind_; }
  const std::string& label() const noexcept { return label_; }
  std::uint64_t id() const noexcept { return id_; }
  double delta() const noexcept { return delta_; }
  std::size_t alphabet_size() const noexcept { return names_.size(); }
  const std::string& name(Letter x) const { return names_.at(x); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  Letter inverse(Letter x) const { return inverse_.at(x); }
  const std::vector<CyclicFactor>& factors() const noexcept { return factors_; }
  const std::vector<RewriteRule>& rules() const noexcept { return rules_; }

  bool is_free_product() const noexcept { return kind_ != ModelKind::Rewriting; }

  // Free products whose normal-form blocks are single letters (factors Z, Z2,
  // Z3). There every normal form prefix is a cut point, which is what the
  // exact tree formulas for first passage and harmonic measure rely on.
  bool is_tree_like() const noexcept {
    if (!is_free_product()) return false;
    return std::all_of(factors_.begin(), factors_.end(),
                       [](const CyclicFactor& f) { return f.order == 0 || f.order <= 3; });
  }

  int factor_of(Letter x) const { return factor_of_.at(x); }

  std::optional<Letter> letter(std::string_view nm) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == nm) return static_cast<Letter>(i);
    return std::nullopt;
  }

  // Words are written as concatenated one-character generator names; spaces
  // are ignored and "1" (or an empty string) is the identity.
  Word parse_word(std::string_view text) const {
    Word w;
    if (text == "1") return w;
    for (char c : text) {
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      auto l = letter(std::string_view(&c, 1));
      if (!l) throw ModelError(std::string("unknown generator letter '") + c + "'");
      w.push_back(*l);
    }
    return w;
  }

  std::string format(const Word& w) const {
    if (w.empty()) return "1";
    std::string s;
    for (Letter x : w) s += names_.at(x);
    return s;
  }
  std::string format(const Element& e) const { return format(e.word()); }

  Element identity() const { return Element({}, id_); }

  Element reduce(const Word& w) const {
    for (Letter x : w)
      if (x >= names_.size()) throw ModelError("letter index out of range");
    Word out;
    out.reserve(w.size());
    if (is_free_product()) {
      for (Letter x : w) push_letter(out, x);
    } else {
      rewrite_into(out, w);
    }
    return Element(std::move(out), id_);
  }

  Element element(std::string_view text) const { return reduce(parse_word(text)); }

  // Wraps a word already known to be in normal form (e.g. produced by
  // push_letter or sphere enumeration).
  Element from_normal_form(Word w) const { return Element(std::move(w), id_); }

  // Right-multiplies the normal-form word w by one generator, in place.
  void push_letter(Word& w, Letter x) const {
    if (!is_free_product()) {
      rewrite_into(w, Word{x});
      return;
    }
    const int f = factor_of_[x];
    if (w.empty() || factor_of_[w.back()] != f) {
      w.push_back(x);
      return;
    }
    const CyclicFactor& fac = factors_[f];
    if (fac.order == 0) {
      if (w.back() == inverse_[x]) {
        w.pop_back();
      } else {
        w.push_back(x);
      }
      return;
    }
    // finite cyclic: trailing block is gen^e or inv^e
    std::size_t run = 0;
    while (run < w.size() && factor_of_[w[w.size() - 1 - run]] == f) ++run;
    int e = static_cast<int>(run) * (w.back() == fac.gen ? 1 : -1);
    e += exponent_of_[x];
    w.resize(w.size() - run);
    append_block(w, fac, e);
  }

  // True iff pushing x onto the normal form w simply appends it.
  bool extends(const Word& w, Letter x) const {
    if (!is_free_product()) {
      Word tmp = w;
      tmp.push_back(x);
      for (const auto& rule : rules_) {
        if (rule.lhs.size() <= tmp.size() &&
            std::equal(rule.lhs.rbegin(), rule.lhs.rend(), tmp.rbegin()))
          return false;
      }
      return true;
    }
    if (w.empty()) return true;
    const int f = factor_of_[x];
    if (factor_of_[w.back()] != f) return true;
    const CyclicFactor& fac = factors_[f];
    if (w.back() != x) return false;
    if (fac.order == 0) return true;
    std::size_t run = 0;
    while (run < w.size() && factor_of_[w[w.size() - 1 - run]] == f) ++run;
    const int e = static_cast<int>(run) + 1;
    // canonical exponents: gen^e for e <= m/2, inv^e for e < m/2
    if (x == fac.gen && fac.gen != fac.inv) return 2 * e <= fac.order;
    if (fac.gen == fac.inv) return false;
    return 2 * e < fac.order;
  }

  Element multiply(const Element& x, const Element& y) const {
    check_same(x, y);
    Word w = x.word();
    if (is_free_product()) {
      for (Letter c : y.word()) push_letter(w, c);
      return Element(std::move(w), id_);
    }
    w.insert(w.end(), y.word().begin(), y.word().end());
    return reduce(w);
  }

  Element inverse(const Element& x) const {
    check_same(x);
    return reduce(inverse_word(x.word()));
  }

  Word inverse_word(const Word& w) const {
    Word r(w.rbegin(), w.rend());
    for (auto& c : r) c = inverse_[c];
    return r;
  }

  std::size_t distance(const Element& x, const Element& y) const {
    check_same(x, y);
    return distance_words(x.word(), y.word());
  }

  // |x^-1 y| for normal-form words. Only the parts after the common word
  // prefix are reduced; push_letter handles any block merging.
  std::size_t distance_words(const Word& x, const Word& y) const {
    std::size_t cp = 0;
    const std::size_t lim = std::min(x.size(), y.size());
    while (cp < lim && x[cp] == y[cp]) ++cp;
    if (is_free_product()) {
      Word w;
      w.reserve(x.size() - cp);
      for (std::size_t i = x.size(); i > cp; --i) push_letter(w, inverse_[x[i - 1]]);
      for (std::size_t i = cp; i < y.size(); ++i) push_letter(w, y[i]);
      return w.size();
    }
    Word w;
    for (std::size_t i = x.size(); i > cp; --i) w.push_back(inverse_[x[i - 1]]);
    w.insert(w.end(), y.begin() + static_cast<std::ptrdiff_t>(cp), y.end());
    return reduce(w).length();
  }

  // (x|y) with basepoint 1; a half-integer.
  double gromov_product(const Element& x, const Element& y) const {
    const double d = static_cast<double>(distance(x, y));
    return (static_cast<double>(x.length()) + static_cast<double>(y.length()) - d) / 2.0;
  }

  // 1 = gamma(0), gamma(1), ..., gamma(|x|) = x along normal-form prefixes.
  std::vector<Element> geodesic_prefixes(const Element& x) const {
    check_same(x);
    std::vector<Element> out;
    out.reserve(x.length() + 1);
    Word w;
    out.push_back(identity());
    for (Letter c : x.word()) {
      w.push_back(c);
      out.push_back(Element(w, id_));
    }
    return out;
  }

  void check_same(const Element& x) const {
    if (x.model_id() != id_) throw ModelError("element belongs to a different group model");
  }
  void check_same(const Element& x, const Element& y) const {
    check_same(x);
    check_same(y);
  }

  // Parses the line-oriented model file format (see docs/file_formats.md).
  static GroupModel parse(std::istream& in, const std::string& source = "<model>");

  static GroupModel load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ModelError("cannot open model file: " + path);
    return parse(f, path);
  }

 private:
  GroupModel(ModelKind kind, const std::vector<std::string>& names,
             const std::vector<std::pair<std::string, std::string>>& pairs)
      : kind_(kind), names_(names), id_(next_id()) {
    if (names_.empty()) throw ModelError("generator list is empty");
    if (names_.size() > 64) throw ModelError("at most 64 generators are supported");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
      if (n.size() != 1 || n == "1" || std::isspace(static_cast<unsigned char>(n[0])))
        throw ModelError("generator names must be single characters other than '1': '" + n + "'");
      if (!seen.insert(n).second) throw ModelError("duplicate generator name '" + n + "'");
    }
    inverse_.assign(names_.size(), kNoLetter);
    for (const auto& [g, h] : pairs) {
      auto a = letter(g), b = letter(h);
      if (!a || !b) throw ModelError("inverse pair names unknown generator: " + g + ":" + h);
      if (inverse_[*a] != kNoLetter || inverse_[*b] != kNoLetter)
        throw ModelError("generator paired twice: " + g + ":" + h);
      inverse_[*a] = *b;
      inverse_[*b] = *a;
      factors_.push_back({*a, *b, *a == *b ? 2 : 0});
    }
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (inverse_[i] == kNoLetter)
        throw ModelError("generator set is not symmetric: '" + names_[i] + "' has no inverse");
    }
  }

  static constexpr Letter kNoLetter = 0xff;

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter++;
  }

  static bool shortlex_less(const Word& a, const Word& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }

  double default_delta() const {
    bool tree = std::all_of(factors_.begin(), factors_.end(),
                            [](const CyclicFactor& f) { return f.order == 0 || f.order == 2; });
    if (tree) return 0.0;
    int worst = 0;
    for (const auto& f : factors_) worst = std::max(worst, f.order);
    // a free product of finite cyclic groups is a tree of m-cycles
    return static_cast<double>(worst) / 6.0;
  }

  void finish_free_product() {
    factor_of_.assign(names_.size(), -1);
    exponent_of_.assign(names_.size(), 0);
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      auto& f = factors_[i];
      if (f.gen == f.inv && f.order != 2)
        throw ModelError("involution '" + names_[f.gen] + "' must generate a factor of order 2");
      if (f.gen != f.inv && f.order == 2)
        throw ModelError("order-2 factor must be generated by an involution");
      if (f.order == 1 || f.order < 0) throw ModelError("factor order must be 0 or >= 2");
      factor_of_[f.gen] = factor_of_[f.inv] = static_cast<int>(i);
      exponent_of_[f.gen] = 1;
      exponent_of_[f.inv] = f.gen == f.inv ? 1 : -1;
    }
  }

  void append_block(Word& w, const CyclicFactor& fac, int e) const {
    const int m = fac.order;
    e %= m;
    if (e < 0) e += m;
    if (e == 0) return;
    if (fac.gen == fac.inv) {
      w.push_back(fac.gen);
      return;
    }
    if (2 * e <= m) {
      w.insert(w.end(), static_cast<std::size_t>(e), fac.gen);
    } else {
      w.insert(w.end(), static_cast<std::size_t>(m - e), fac.inv);
    }
  }

  // Appends `tail` to the irreducible word `out`, rewriting as it goes. Any
  // redex must end at the top of `out`, so only suffixes are checked.
  void rewrite_into(Word& out, const Word& tail) const {
    Word pending(tail.rbegin(), tail.rend());
    std::size_t steps = 0;
    while (!pending.empty()) {
      out.push_back(pending.back());
      pending.pop_back();
      for (const auto& rule : rules_) {
        const auto& l = rule.lhs;
        if (l.size() <= out.size() && std::equal(l.rbegin(), l.rend(), out.rbegin())) {
          out.resize(out.size() - l.size());
          for (auto it = rule.rhs.rbegin(); it != rule.rhs.rend(); ++it) pending.push_back(*it);
          if (++steps > 10'000'000) throw ModelError("rewriting did not terminate");
          break;
        }
      }
    }
  }

  Word rewrite(const Word& w) const {
    Word out;
    rewrite_into(out, w);
    return out;
  }

  // Checks every critical pair (overlap or inclusion of left-hand sides) up
  // to the given word length (0 = all of them).
  void check_confluence(std::size_t max_len) const {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      for (std::size_t j = 0; j < rules_.size(); ++j) {
        const Word& l1 = rules_[i].lhs;
        const Word& l2 = rules_[j].lhs;
        // proper overlaps: suffix of l1 equals prefix of l2
        for (std::size_t k = 1; k < l1.size() && k < l2.size(); ++k) {
          if (!std::equal(l1.end() - static_cast<std::ptrdiff_t>(k), l1.end(), l2.begin()))
            continue;
          Word u = l1;
          u.insert(u.end(), l2.begin() + static_cast<std::ptrdiff_t>(k), l2.end());
          if (max_len && u.size() > max_len) continue;
          Word a = rules_[i].rhs;
          a.insert(a.end(), l2.begin() + static_cast<std::ptrdiff_t>(k), l2.end());
          Word b(l1.begin(), l1.end() - static_cast<std::ptrdiff_t>(k));
          b.insert(b.end(), rules_[j].rhs.begin(), rules_[j].rhs.end());
          if (rewrite(a) != rewrite(b))
            throw ModelError("non-confluent rewriting system: critical pair on " + format(u));
        }
        // inclusion: l2 occurs inside l1
        if (i != j && l2.size() <= l1.size()) {
          for (std::size_t p = 0; p + l2.size() <= l1.size(); ++p) {
            if (!std::equal(l2.begin(), l2.end(), l1.begin() + static_cast<std::ptrdiff_t>(p)))
              continue;
            if (max_len && l1.size() > max_len) continue;
            Word b(l1.begin(), l1.begin() + static_cast<std::ptrdiff_t>(p));
            b.insert(b.end(), rules_[j].rhs.begin(), rules_[j].rhs.end());
            b.insert(b.end(), l1.begin() + static_cast<std::ptrdiff_t>(p + l2.size()), l1.end());
            if (rewrite(rules_[i].rhs) != rewrite(b))
              throw ModelError("non-confluent rewriting system: critical pair on " + format(l1));
          }
        }
      }
    }
  }

  ModelKind kind_;
  std::vector<std::string> names_;
  std::vector<Letter> inverse_;
  std::vector<CyclicFactor> factors_;
  std::vector<int> factor_of_;
  std::vector<int> exponent_of_;
  std::vector<RewriteRule> rules_;
  double delta_ = 0.0;
  std::string label_;
  std::uint64_t id_;
};

inline GroupModel GroupModel::parse(std::istream& in, const std::string& source) {
  std::string kind;
  std::vector<std::string> gens;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::set<std::string> paired;
  std::map<std::string, int> orders;
  std::vector<std::pair<std::string, std::string>> rules;
  std::optional<double> delta;
  std::size_t depth = 0;
  std::size_t kind_line = 0;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::vector<std::string> args;
    for (std::string t; ls >> t;) args.push_back(t);
    auto need = [&](std::size_t n) {
      if (args.size() != n)
        throw ParseError(source, lineno, "'" + key + "' expects " + std::to_string(n) + " argument(s)");
    };
    if (key == "kind") {
      need(1);
      kind = args[0];
      kind_line = lineno;
      if (kind != "free" && kind != "free_product" && kind != "rewriting")
        throw ParseError(source, lineno, "unknown kind '" + kind + "'");
    } else if (key == "generators") {
      if (args.empty()) throw ParseError(source, lineno, "'generators' needs at least one name");
      gens.insert(gens.end(), args.begin(), args.end());
    } else if (key == "inverses") {
      if (args.empty()) throw ParseError(source, lineno, "'inverses' needs x:X pairs");
      for (const auto& p : args) {
        auto c = p.find(':');
        if (c == std::string::npos || c == 0 || c + 1 == p.size())
          throw ParseError(source, lineno, "malformed inverse pair '" + p + "'");
        const std::string g = p.substr(0, c), h = p.substr(c + 1);
        for (const auto& nm : g == h ? std::vector<std::string>{g} : std::vector<std::string>{g, h}) {
          if (std::find(gens.begin(), gens.end(), nm) == gens.end())
            throw ParseError(source, lineno, "'" + nm + "' in inverse pair is not a declared generator");
          if (paired.count(nm))
            throw ParseError(source, lineno, "generator '" + nm + "' appears in two inverse pairs");
          paired.insert(nm);
        }
        pairs.emplace_back(g, h);
      }
    } else if (key == "order") {
      need(2);
      try {
        orders[args[0]] = std::stoi(args[1]);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "order must be an integer");
      }
    } else if (key == "rule") {
      need(2);
      rules.emplace_back(args[0], args[1]);
    } else if (key == "delta") {
      need(1);
      try {
        delta = std::stod(args[0]);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "delta must be a number");
      }
      if (*delta < 0) throw ParseError(source, lineno, "delta must be non-negative");
    } else if (key == "confluence_depth") {
      need(1);
      depth = static_cast<std::size_t>(std::stoul(args[0]));
    } else {
      throw ParseError(source, lineno, "unknown key '" + key + "'");
    }
  }
  if (kind.empty()) throw ParseError(source, lineno, "missing 'kind' line");
  if (gens.empty()) throw ParseError(source, lineno, "missing 'generators' line");
  try {
    if (kind == "rewriting") {
      return rewriting(gens, pairs, rules, delta.value_or(1.0), depth);
    }
    if (!rules.empty()) throw ParseError(source, kind_line, "rules are only allowed for kind rewriting");
    std::vector<FactorSpec> specs;
    for (const auto& [g, h] : pairs) {
      int ord = g == h ? 2 : 0;
      if (auto it = orders.find(g); it != orders.end()) ord = it->second;
      if (kind == "free" && ord != 0)
        throw ParseError(source, kind_line, "free groups cannot have finite-order generators");
      specs.push_back({g, h, ord});
    }
    std::size_t covered = 0;
    for (const auto& s : specs) covered += s.gen == s.inv ? 1 : 2;
    if (covered != gens.size())
      throw ParseError(source, lineno, "every generator must appear in exactly one inverse pair");
    auto m = free_product(specs, delta);
    if (kind == "free") m.kind_ = ModelKind::Free;
    return m;
  } catch (const ParseError&) {
    throw;
  } catch (const ModelError& e) {
    throw ParseError(source, kind_line, e.what());
  }
}

// Shadow S(x, R), realized by the Gromov-product cone (x|y) >= |x| - R.
class ShadowSpec {
 public:
  ShadowSpec(const GroupModel& model, Element apex, double radius)
      : apex_(std::move(apex)), radius_(radius) {
    model.check_same(apex_);
    if (radius < 0 || radius + 1e-12 < 4.0 * model.delta())
      throw PreconditionError("shadow radius must be at least 4*delta = " +
                              std::to_string(4.0 * model.delta()));
  }
  const Element& apex() const noexcept { return apex_; }
  double radius() const noexcept { return radius_; }

 private:
  Element apex_;
  double radius_;
};

inline bool shadow_contains(const GroupModel& model, const ShadowSpec& spec, const Element& y) {
  model.check_same(y);
  const Element& x = spec.apex();
  if (y.length() < x.length())
    throw PreconditionError("shadow_contains needs |y| >= |apex|");
  return model.gromov_product(x, y) >= static_cast<double>(x.length()) - spec.radius() - 1e-12;
}

// d(g, gamma(n)) - d(gamma(n), 1): the stage-n Busemann approximant.
inline long busemann_along(const GroupModel& model, const std::vector<Element>& ray_prefix,
                           const Element& g, std::size_t n) {
  if (n >= ray_prefix.size()) throw PreconditionError("busemann_along: index out of range");
  const Element& p = ray_prefix[n];
  return static_cast<long>(model.distance(g, p)) - static_cast<long>(p.length());
}

// Depth-first walk over the sphere S_n in lexicographic normal-form order.
// fn receives each normal-form word exactly once.
template <class Fn>
void for_each_sphere_word(const GroupModel& model, std::size_t n, Fn&& fn, Budget budget = {}) {
  Word w;
  w.reserve(n);
  std::size_t visited = 0;
  const std::size_t k = model.alphabet_size();
  std::vector<Letter> next(n + 1, 0);
  std::size_t depth = 0;
  // iterative DFS: next[depth] is the next letter to try at this depth
  while (true) {
    if (depth == n) {
      budget.check(++visited, "sphere enumeration");
      fn(static_cast<const Word&>(w));
      if (depth == 0) return;
      w.pop_back();
      --depth;
      continue;
    }
    bool pushed = false;
    while (next[depth] < k) {
      Letter x = next[depth]++;
      if (model.extends(w, x)) {
        w.push_back(x);
        ++depth;
        next[depth] = 0;
        pushed = true;
        break;
      }
    }
    if (!pushed) {
      if (depth == 0) return;
      w.pop_back();
      --depth;
    }
  }
}

inline std::vector<std::vector<Element>> ball_enumerate(const GroupModel& model, std::size_t n,
                                                        Budget budget = {}) {
  std::vector<std::vector<Element>> spheres(n + 1);
  std::size_t total = 0;
  for (std::size_t k = 0; k <= n; ++k) {
    for_each_sphere_word(
        model, k,
        [&](const Word& w) {
          budget.check(++total, "ball_enumerate");
          spheres[k].push_back(model.from_normal_form(w));
        },
        budget);
  }
  return spheres;
}

// Independent sphere oracle: breadth-first search in the Cayley graph with a
// visited set, using only reduce(). Makes no assumption about prefix closure.
inline std::vector<std::vector<Element>> brute_force_spheres(const GroupModel& model, std::size_t n,
                                                             Budget budget = {}) {
  std::vector<std::vector<Element>> spheres;
  std::unordered_set<Word, WordHash> seen;
  spheres.push_back({model.identity()});
  seen.insert(Word{});
  for (std::size_t k = 1; k <= n; ++k) {
    std::vector<Element> layer;
    for (const auto& x : spheres[k - 1]) {
      for (Letter s = 0; s < model.alphabet_size(); ++s) {
        Word w = x.word();
        w.push_back(s);
        Element y = model.reduce(w);
        if (seen.insert(y.word()).second) {
          budget.check(seen.size(), "brute-force sphere enumeration");
          layer.push_back(std::move(y));
        }
      }
    }
    std::sort(layer.begin(), layer.end());
    spheres.push_back(std::move(layer));
  }
  return spheres;
}

}  // namespace hyperwalk
