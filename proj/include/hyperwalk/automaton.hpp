#pragma once

// Strongly Markov automatic structures: finite labelled graphs whose paths
// from the initial state biject with group elements through geodesic words.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "common.hpp"
#include "group_model.hpp"
#include "linalg.hpp"

namespace hyperwalk {

struct AutomatonEdge {
  std::size_t from;
  Letter label;
  std::size_t to;
};

class Automaton {
 public:
  Automaton(std::size_t states, std::size_t initial, std::vector<AutomatonEdge> edges,
            const GroupModel& model)
      : states_(states), initial_(initial), edges_(std::move(edges)), model_id_(model.id()) {
    if (states_ == 0) throw ModelError("automaton has no states");
    if (initial_ >= states_) throw ModelError("initial state out of range");
    out_.assign(states_, {});
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const auto& e = edges_[i];
      if (e.from >= states_ || e.to >= states_) throw ModelError("edge endpoint out of range");
      if (e.label >= model.alphabet_size()) throw ModelError("edge label not in generator set");
      out_[e.from].push_back(i);
    }
    std::vector<char> seen(states_, 0);
    std::vector<std::size_t> stack{initial_};
    seen[initial_] = 1;
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      for (auto ei : out_[v]) {
        auto t = edges_[ei].to;
        if (!seen[t]) {
          seen[t] = 1;
          stack.push_back(t);
        }
      }
    }
    for (std::size_t v = 0; v < states_; ++v)
      if (!seen[v])
        throw ModelError("automaton state " + std::to_string(v) +
                         " is unreachable from the initial state");
  }

  // Built-in structure for free products and rewriting models: states are the
  // distinct "suffix contexts" that decide which letters may follow a normal
  // form. For free products that is (last letter, run length in a finite
  // block); for rewriting systems it is the last (max lhs - 1) letters.
  static Automaton builtin(const GroupModel& model, Budget budget = {}) {
    std::size_t keep = 1;
    if (!model.is_free_product()) {
      for (const auto& r : model.rules()) keep = std::max(keep, r.lhs.size() - 1);
    }
    auto context = [&](const Word& w) -> Word {
      if (model.is_free_product()) {
        if (w.empty()) return {};
        const int f = model.factor_of(w.back());
        const int order = model.factors()[f].order;
        std::size_t run = 0;
        while (run < w.size() && model.factor_of(w[w.size() - 1 - run]) == f) ++run;
        if (order == 0) run = 1;
        Word key(run, w.back());
        return key;
      }
      const std::size_t n = std::min(keep, w.size());
      return Word(w.end() - static_cast<std::ptrdiff_t>(n), w.end());
    };
    std::map<Word, std::size_t> index;
    std::vector<Word> reps;
    std::vector<AutomatonEdge> edges;
    index[{}] = 0;
    reps.push_back({});
    for (std::size_t v = 0; v < reps.size(); ++v) {
      budget.check(reps.size(), "automaton construction");
      for (Letter x = 0; x < model.alphabet_size(); ++x) {
        if (!model.extends(reps[v], x)) continue;
        Word w = reps[v];
        w.push_back(x);
        Word key = context(w);
        auto [it, fresh] = index.emplace(key, reps.size());
        if (fresh) reps.push_back(key);
        edges.push_back({v, x, it->second});
      }
    }
    return Automaton(reps.size(), 0, std::move(edges), model);
  }

  // Line format: "states N", "initial K", then one edge per line as
  // "from label to". '#' starts a comment.
  static Automaton parse(std::istream& in, const GroupModel& model,
                         const std::string& source = "<automaton>") {
    std::optional<std::size_t> states, initial;
    std::vector<AutomatonEdge> edges;
    std::string line;
    std::size_t lineno = 0;
    auto to_index = [&](const std::string& s) -> std::size_t {
      try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size() || v < 0) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "expected a non-negative integer, got '" + s + "'");
      }
    };
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      std::istringstream ls(line);
      std::vector<std::string> tok;
      for (std::string t; ls >> t;) tok.push_back(t);
      if (tok.empty()) continue;
      if (tok[0] == "states" && tok.size() == 2) {
        states = to_index(tok[1]);
      } else if (tok[0] == "initial" && tok.size() == 2) {
        initial = to_index(tok[1]);
      } else if (tok.size() == 3) {
        if (!states) throw ParseError(source, lineno, "edge before 'states' header");
        auto l = model.letter(tok[1]);
        if (!l) throw ParseError(source, lineno, "edge label '" + tok[1] + "' is not a generator");
        auto from = to_index(tok[0]), to = to_index(tok[2]);
        if (from >= *states || to >= *states)
          throw ParseError(source, lineno, "edge endpoint out of range");
        edges.push_back({from, *l, to});
      } else {
        throw ParseError(source, lineno, "malformed line");
      }
    }
    if (!states) throw ParseError(source, lineno, "missing 'states' header");
    if (!initial) throw ParseError(source, lineno, "missing 'initial' header");
    try {
      return Automaton(*states, *initial, std::move(edges), model);
    } catch (const ModelError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }

  static Automaton load(const std::string& path, const GroupModel& model) {
    std::ifstream f(path);
    if (!f) throw ModelError("cannot open automaton file: " + path);
    return parse(f, model, path);
  }

  std::string to_text(const GroupModel& model) const {
    std::ostringstream os;
    os << "states " << states_ << "\ninitial " << initial_ << "\n";
    for (const auto& e : edges_) os << e.from << ' ' << model.name(e.label) << ' ' << e.to << '\n';
    return os.str();
  }

  std::size_t num_states() const noexcept { return states_; }
  std::size_t initial() const noexcept { return initial_; }
  const std::vector<AutomatonEdge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& out_edges(std::size_t v) const { return out_.at(v); }
  std::uint64_t model_id() const noexcept { return model_id_; }

  // Number of paths of length n from the initial state, for n = 0..n_max.
  std::vector<double> path_counts(std::size_t n_max) const {
    std::vector<double> cur(states_, 0.0), nxt(states_);
    cur[initial_] = 1.0;
    std::vector<double> out{1.0};
    for (std::size_t n = 1; n <= n_max; ++n) {
      std::fill(nxt.begin(), nxt.end(), 0.0);
      for (const auto& e : edges_) nxt[e.to] += cur[e.from];
      cur.swap(nxt);
      out.push_back(std::accumulate(cur.begin(), cur.end(), 0.0));
    }
    return out;
  }

 private:
  std::size_t states_;
  std::size_t initial_;
  std::vector<AutomatonEdge> edges_;
  std::vector<std::vector<std::size_t>> out_;
  std::uint64_t model_id_;
};

// Streams every path of length n from the initial state as its label word,
// in edge order. fn(const Word&).
template <class Fn>
void sphere_paths(const Automaton& aut, std::size_t n, Fn&& fn, Budget budget = {}) {
  Word labels;
  std::vector<std::size_t> state{aut.initial()};
  std::vector<std::size_t> next{0};
  std::size_t emitted = 0;
  while (!state.empty()) {
    if (labels.size() == n) {
      budget.check(++emitted, "sphere_paths");
      fn(static_cast<const Word&>(labels));
      state.pop_back();
      next.pop_back();
      if (!labels.empty()) labels.pop_back();
      continue;
    }
    const auto& out = aut.out_edges(state.back());
    if (next.back() < out.size()) {
      const auto& e = aut.edges()[out[next.back()++]];
      labels.push_back(e.label);
      state.push_back(e.to);
      next.push_back(0);
    } else {
      state.pop_back();
      next.pop_back();
      if (!labels.empty()) labels.pop_back();
    }
  }
}

struct ValidationRow {
  std::size_t depth = 0;
  std::size_t paths = 0;
  std::size_t sphere = 0;
  std::size_t non_geodesic = 0;
  std::size_t duplicates = 0;
  std::size_t missing = 0;
};

struct ValidationReport {
  bool pass = true;
  std::vector<ValidationRow> rows;
  std::vector<std::string> counterexamples;

  std::string to_text() const {
    std::ostringstream os;
    os << "verdict " << (pass ? "pass" : "fail") << "\n";
    os << "depth paths sphere non_geodesic duplicates missing\n";
    for (const auto& r : rows)
      os << r.depth << ' ' << r.paths << ' ' << r.sphere << ' ' << r.non_geodesic << ' '
         << r.duplicates << ' ' << r.missing << '\n';
    for (const auto& c : counterexamples) os << "counterexample " << c << '\n';
    return os.str();
  }
};

// Checks, for every n <= depth, that the label map from length-n paths to the
// sphere S_n is a bijection onto geodesic words. Spheres come from the
// brute-force Cayley-graph search, independent of the automaton.
inline ValidationReport validate(const Automaton& aut, const GroupModel& model, std::size_t depth,
                                 Budget budget = {}, std::size_t max_counterexamples = 10) {
  if (aut.model_id() != model.id()) throw ModelError("automaton built for a different model");
  ValidationReport rep;
  auto spheres = brute_force_spheres(model, depth, budget);
  auto note = [&](std::string s) {
    rep.pass = false;
    if (rep.counterexamples.size() < max_counterexamples) rep.counterexamples.push_back(std::move(s));
  };
  for (std::size_t n = 0; n <= depth; ++n) {
    ValidationRow row;
    row.depth = n;
    row.sphere = spheres[n].size();
    std::unordered_set<Word, WordHash> hit;
    sphere_paths(
        aut, n,
        [&](const Word& labels) {
          ++row.paths;
          Element x = model.reduce(labels);
          if (x.length() != n) {
            ++row.non_geodesic;
            note("depth " + std::to_string(n) + ": path " + model.format(labels) +
                 " is not geodesic (reduces to " + model.format(x) + ")");
          }
          if (!hit.insert(x.word()).second) {
            ++row.duplicates;
            note("depth " + std::to_string(n) + ": element " + model.format(x) +
                 " reached by two paths");
          }
        },
        budget);
    for (const auto& y : spheres[n]) {
      if (!hit.count(y.word())) {
        if (row.missing == 0)
          note("depth " + std::to_string(n) + ": missing word " + model.format(y));
        ++row.missing;
      }
    }
    rep.rows.push_back(row);
  }
  return rep;
}

struct Component {
  std::vector<std::size_t> states;
  // Single state without a self-loop: carries no infinite path.
  bool trivial = false;
  // gcd of cycle lengths; 0 for trivial components.
  std::size_t period = 0;
  // cyclic class (0..period-1) of each entry of `states`.
  std::vector<std::size_t> cyclic_class;
};

struct ComponentDecomposition {
  // Components in topological order: edges only go from lower to higher index.
  std::vector<Component> components;
  std::vector<std::size_t> component_of;
  std::vector<std::vector<std::size_t>> successors;

  std::vector<std::size_t> nontrivial() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < components.size(); ++i)
      if (!components[i].trivial) out.push_back(i);
    return out;
  }

  // Is there a directed path (length >= 1) from component a to component b?
  bool reaches(std::size_t a, std::size_t b) const {
    std::vector<char> seen(components.size(), 0);
    std::vector<std::size_t> stack(successors[a].begin(), successors[a].end());
    while (!stack.empty()) {
      auto c = stack.back();
      stack.pop_back();
      if (c == b) return true;
      if (seen[c]) continue;
      seen[c] = 1;
      for (auto d : successors[c]) stack.push_back(d);
    }
    return false;
  }
};

// Strongly connected components of a directed graph given as adjacency lists.
// Returns component ids in topological order (sources first).
inline std::vector<std::size_t> strongly_connected(const std::vector<std::vector<std::size_t>>& adj,
                                                   std::size_t& count) {
  const std::size_t n = adj.size();
  const std::size_t unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, unset), low(n, 0), comp(n, unset);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::size_t counter = 0, found = 0;
  struct Frame {
    std::size_t v;
    std::size_t next;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unset) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& f = call.back();
      if (f.next < adj[f.v].size()) {
        auto w = adj[f.v][f.next++];
        if (index[w] == unset) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      auto v = f.v;
      if (low[v] == index[v]) {
        while (true) {
          auto w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = found;
          if (w == v) break;
        }
        ++found;
      }
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
    }
  }
  // Tarjan emits sinks first; reverse for topological order.
  for (auto& c : comp) c = found - 1 - c;
  count = found;
  return comp;
}

// SCCs, periods (gcd over in-component edges of level(u) + 1 - level(v) for
// BFS levels from a base state) and cyclic classes (level mod period).
inline ComponentDecomposition decompose_graph(const std::vector<std::vector<std::size_t>>& adj) {
  ComponentDecomposition d;
  std::size_t count = 0;
  d.component_of = strongly_connected(adj, count);
  d.components.assign(count, {});
  d.successors.assign(count, {});
  for (std::size_t v = 0; v < adj.size(); ++v) d.components[d.component_of[v]].states.push_back(v);
  for (std::size_t c = 0; c < count; ++c) {
    auto& comp = d.components[c];
    std::map<std::size_t, long> level;
    level[comp.states.front()] = 0;
    std::vector<std::size_t> queue{comp.states.front()};
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      auto u = queue[qi];
      for (auto w : adj[u]) {
        if (d.component_of[w] != c) continue;
        if (!level.count(w)) {
          level[w] = level[u] + 1;
          queue.push_back(w);
        }
      }
    }
    long g = 0;
    bool has_edge = false;
    for (auto u : comp.states) {
      for (auto w : adj[u]) {
        if (d.component_of[w] != c) continue;
        has_edge = true;
        g = std::gcd(g, std::labs(level[u] + 1 - level[w]));
      }
    }
    comp.trivial = !has_edge;
    comp.period = has_edge ? static_cast<std::size_t>(g) : 0;
    if (has_edge) {
      for (auto u : comp.states) comp.cyclic_class.push_back(static_cast<std::size_t>(level[u] % g));
    }
  }
  for (std::size_t v = 0; v < adj.size(); ++v) {
    for (auto w : adj[v]) {
      auto a = d.component_of[v], b = d.component_of[w];
      if (a != b) d.successors[a].push_back(b);
    }
  }
  for (auto& s : d.successors) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  return d;
}

inline std::vector<std::vector<std::size_t>> adjacency(const Automaton& aut) {
  std::vector<std::vector<std::size_t>> adj(aut.num_states());
  for (const auto& e : aut.edges()) adj[e.from].push_back(e.to);
  return adj;
}

inline ComponentDecomposition scc_decompose(const Automaton& aut) {
  return decompose_graph(adjacency(aut));
}

// Logarithmic volume growth v: log of the largest Perron root over the
// non-trivial components of the adjacency matrix.
inline double growth_rate(const Automaton& aut, double rel_tol = 1e-13) {
  auto d = scc_decompose(aut);
  double best = 0.0;
  bool any = false;
  for (auto c : d.nontrivial()) {
    const auto& st = d.components[c].states;
    std::map<std::size_t, Eigen::Index> local;
    for (std::size_t i = 0; i < st.size(); ++i) local[st[i]] = static_cast<Eigen::Index>(i);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(st.size()),
                                              static_cast<Eigen::Index>(st.size()));
    for (const auto& e : aut.edges()) {
      if (d.component_of[e.from] == c && d.component_of[e.to] == c)
        m(local[e.from], local[e.to]) += 1.0;
    }
    best = std::max(best, perron_root(m, rel_tol).value);
    any = true;
  }
  if (!any) return -std::numeric_limits<double>::infinity();
  return std::log(best);
}

}  // namespace hyperwalk
