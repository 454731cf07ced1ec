#pragma once

// Green function G(1,x), first-passage probabilities F(1,x) and Martin-kernel
// ratios: exact product formulas on tree-like free products, absorbing-ball
// linear solves elsewhere, and a Monte Carlo oracle.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "group_model.hpp"
#include "step_distribution.hpp"

namespace hyperwalk {

class GreenUnavailable : public Error {
 public:
  using Error::Error;
};

// Source of Green-function values G(1, x).
class GreenFunction {
 public:
  virtual ~GreenFunction() = default;

  // G(1, x) for x given by its normal-form word.
  virtual double green_word(const Word& w) const = 0;
  virtual std::string method() const = 0;
  // log G(1, x); backends override this when G underflows at large |x|.
  virtual double log_green_word(const Word& w) const { return std::log(green_word(w)); }

  double green(const Element& x) const { return green_word(x.word()); }
  double green_identity() const { return green_word(Word{}); }
  // F(1, x) = G(1, x) / G(x, x), and G(x, x) = G(1, 1) by invariance.
  double first_passage(const Element& x) const { return green(x) / green_identity(); }
  double first_passage_word(const Word& w) const { return green_word(w) / green_identity(); }
  double log_green(const Element& x) const { return log_green_word(x.word()); }
  double log_first_passage_word(const Word& w) const {
    return log_green_word(w) - log_green_word(Word{});
  }
};

struct FirstPassageTable {
  // F(1, x) for every single generator x.
  std::vector<double> letter;
  double green_identity = 1.0;
  double residual = 0.0;
  long iterations = 0;
};

// Minimal solution of the first-passage fixed-point system for a
// nearest-neighbour walk on a tree-like free product, by monotone iteration
// from 0. For a letter g in factor i:
//   F(g) = sum_{h in factor i} mu(h) [h == g ? 1 : F(h^-1 g)]
//        + (sum_{u outside factor i} mu(u) F(u^-1)) F(g),
// with F multiplicative over normal-form letters.
inline FirstPassageTable solve_tree_first_passage(const GroupModel& model, const StepDistribution& mu,
                                                  double tol = 1e-14, long max_iterations = 1'000'000) {
  if (!model.is_tree_like())
    throw PreconditionError("solve_tree_first_passage needs a tree-like free product model");
  if (!mu.nearest_neighbor())
    throw PreconditionError("solve_tree_first_passage needs a nearest-neighbour step distribution");
  const std::size_t k = model.alphabet_size();
  std::vector<double> prob(k, 0.0);
  for (const auto& a : mu.atoms()) prob[a.element.word()[0]] = a.probability;

  // h^-1 g as a normal-form word, for h, g in the same factor
  std::vector<std::vector<Word>> quotient(k, std::vector<Word>(k));
  for (Letter g = 0; g < k; ++g)
    for (Letter h = 0; h < k; ++h)
      if (model.factor_of(g) == model.factor_of(h))
        quotient[g][h] = model.reduce(Word{model.inverse(h), g}).word();

  auto eval = [&](const std::vector<double>& f, const Word& w) {
    double p = 1.0;
    for (Letter c : w) p *= f[c];
    return p;
  };
  auto step = [&](const std::vector<double>& f) {
    std::vector<double> out(k, 0.0);
    for (Letter g = 0; g < k; ++g) {
      double same = 0.0, loop = 0.0;
      for (Letter h = 0; h < k; ++h) {
        if (prob[h] == 0.0) continue;
        if (model.factor_of(h) == model.factor_of(g)) {
          same += prob[h] * (h == g ? 1.0 : eval(f, quotient[g][h]));
        } else {
          loop += prob[h] * f[model.inverse(h)];
        }
      }
      out[g] = same + loop * f[g];
    }
    return out;
  };

  FirstPassageTable t;
  std::vector<double> f(k, 0.0);
  for (long it = 1;; ++it) {
    auto g = step(f);
    double change = 0.0;
    for (std::size_t i = 0; i < k; ++i) change = std::max(change, std::abs(g[i] - f[i]));
    f.swap(g);
    t.iterations = it;
    if (change <= tol) break;
    if (it >= max_iterations)
      throw ConvergenceError("first-passage iteration did not converge within the cap");
  }
  auto r = step(f);
  for (std::size_t i = 0; i < k; ++i) t.residual = std::max(t.residual, std::abs(r[i] - f[i]));
  t.letter = f;
  double u = 0.0;
  for (Letter x = 0; x < k; ++x) u += prob[x] * f[model.inverse(x)];
  t.green_identity = 1.0 / (1.0 - u);
  return t;
}

// Exact Green function on tree-like models: G(1,x) = G(1,1) prod F(1, s_i).
class TreeGreen final : public GreenFunction {
 public:
  TreeGreen(const GroupModel& model, const StepDistribution& mu)
      : table_(solve_tree_first_passage(model, mu)) {}
  explicit TreeGreen(FirstPassageTable table) : table_(std::move(table)) {}

  double green_word(const Word& w) const override {
    double g = table_.green_identity;
    for (Letter c : w) g *= table_.letter[c];
    return g;
  }
  double log_green_word(const Word& w) const override {
    double g = std::log(table_.green_identity);
    for (Letter c : w) g += std::log(table_.letter[c]);
    return g;
  }
  std::string method() const override { return "exact-tree"; }
  const FirstPassageTable& table() const noexcept { return table_; }

 private:
  FirstPassageTable table_;
};

// G restricted to a ball: values of the absorbing-ball solution for every
// element of B_H. Lookups outside the ball throw GreenUnavailable.
class BallGreen final : public GreenFunction {
 public:
  BallGreen(std::unordered_map<Word, double, WordHash> values, std::size_t horizon)
      : values_(std::move(values)), horizon_(horizon) {}

  double green_word(const Word& w) const override {
    auto it = values_.find(w);
    if (it == values_.end())
      throw GreenUnavailable("Green value requested outside the solved ball of radius " +
                             std::to_string(horizon_));
    return it->second;
  }
  std::string method() const override { return "truncated-ball"; }
  std::size_t horizon() const noexcept { return horizon_; }
  const std::unordered_map<Word, double, WordHash>& values() const noexcept { return values_; }

 private:
  std::unordered_map<Word, double, WordHash> values_;
  std::size_t horizon_;
};

// Solves h(y) = [y == 1] + sum_z h(z) mu(z^-1 y) on the ball B_H with the
// walk killed on leaving it, by Gauss-Seidel from 0. Iterates increase
// monotonically, so every iterate is a lower bound for G_H(1, .) <= G(1, .).
inline BallGreen solve_ball_green(const GroupModel& model, const StepDistribution& mu,
                                  std::size_t horizon, double tol = 1e-14, Budget budget = {},
                                  long max_sweeps = 200'000) {
  if (mu.model_id() != model.id()) throw ModelError("step distribution built for a different model");
  auto spheres = ball_enumerate(model, horizon, budget);
  std::unordered_map<Word, std::size_t, WordHash> index;
  std::vector<const Word*> words;
  for (const auto& s : spheres)
    for (const auto& e : s) {
      index.emplace(e.word(), words.size());
      words.push_back(&e.word());
    }
  const std::size_t n = words.size();
  // incoming[y] = list of (z, mu) with z * step = y
  std::vector<std::vector<std::pair<std::size_t, double>>> incoming(n);
  for (std::size_t z = 0; z < n; ++z) {
    for (const auto& a : mu.atoms()) {
      Word w = *words[z];
      if (model.is_free_product()) {
        for (Letter c : a.element.word()) model.push_letter(w, c);
      } else {
        w.insert(w.end(), a.element.word().begin(), a.element.word().end());
        w = model.reduce(w).word();
      }
      auto it = index.find(w);
      if (it != index.end()) incoming[it->second].emplace_back(z, a.probability);
    }
  }
  std::vector<double> h(n, 0.0);
  for (long sweep = 1;; ++sweep) {
    double change = 0.0, scale = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      double v = y == 0 ? 1.0 : 0.0;
      for (const auto& [z, p] : incoming[y]) v += h[z] * p;
      change = std::max(change, v - h[y]);
      scale = std::max(scale, v);
      h[y] = v;
    }
    if (change <= tol * scale) break;
    if (sweep >= max_sweeps) throw ConvergenceError("truncated Green solve did not converge");
  }
  std::unordered_map<Word, double, WordHash> values;
  values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) values.emplace(*words[i], h[i]);
  return BallGreen(std::move(values), horizon);
}

// Cayley graph is a tree: free products of Z and Z2 factors.
inline bool cayley_tree(const GroupModel& model) {
  if (!model.is_free_product()) return false;
  return std::all_of(model.factors().begin(), model.factors().end(),
                     [](const CyclicFactor& f) { return f.order == 0 || f.order == 2; });
}

// Absorbing-ball value G_H(1, x) on a Cayley tree for a nearest-neighbour
// walk, by the exact cut-point recursion (no ball enumeration):
//   d_k(l) = P(node at depth k entered by l hits its parent before exit),
//   f_j    = P(prefix p_j hits p_{j+1} before exit),
// G_H(1,x) = prod f_j / (1 - return probability at x).
inline double tree_ball_green(const GroupModel& model, const StepDistribution& mu, const Element& x,
                              std::size_t horizon) {
  const std::size_t k = model.alphabet_size();
  std::vector<double> prob(k, 0.0);
  for (const auto& a : mu.atoms()) prob[a.element.word()[0]] = a.probability;
  const auto& w = x.word();
  const std::size_t m = w.size();
  // d[depth][letter], depth = 1..H+1; depth H+1 lies outside the ball
  std::vector<std::vector<double>> d(horizon + 2, std::vector<double>(k, 0.0));
  for (std::size_t depth = horizon + 1; depth-- > 1;) {
    for (Letter l = 0; l < k; ++l) {
      double loop = 0.0;
      for (Letter u = 0; u < k; ++u)
        if (u != model.inverse(l)) loop += prob[u] * d[depth + 1][u];
      d[depth][l] = prob[model.inverse(l)] / (1.0 - loop);
    }
  }
  double log_fp = 0.0;
  double f_prev = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const Letter next = w[j];
    double loop = 0.0;
    for (Letter u = 0; u < k; ++u) {
      if (u == next) continue;
      if (j >= 1 && u == model.inverse(w[j - 1])) {
        loop += prob[u] * f_prev;  // up to the parent and back
      } else {
        loop += prob[u] * d[j + 1][u];
      }
    }
    const double f = prob[next] / (1.0 - loop);
    log_fp += std::log(f);
    f_prev = f;
  }
  double ret = 0.0;
  for (Letter u = 0; u < k; ++u) {
    if (m >= 1 && u == model.inverse(w[m - 1])) {
      ret += prob[u] * f_prev;
    } else {
      ret += prob[u] * d[m + 1][u];
    }
  }
  return std::exp(log_fp) / (1.0 - ret);
}

struct TruncatedGreen {
  // Absorbing-ball solution at the requested horizon (certified lower bound).
  double lower = 0.0;
  // Geometric (Aitken) extrapolation over three horizons ending at H.
  double estimate = 0.0;
  std::string method;
};

// Truncated Green value G_H(1, x). Needs |x| + reach <= H.
inline TruncatedGreen truncated_green(const GroupModel& model, const StepDistribution& mu,
                                      const Element& x, std::size_t horizon, Budget budget = {}) {
  model.check_same(x);
  if (x.length() + mu.reach() > horizon)
    throw PreconditionError("truncated_green: horizon " + std::to_string(horizon) +
                            " too small for |x| = " + std::to_string(x.length()));
  const bool tree = cayley_tree(model) && mu.nearest_neighbor();
  auto value_at = [&](std::size_t h) {
    if (tree) return tree_ball_green(model, mu, x, h);
    return solve_ball_green(model, mu, h, 1e-14, budget).green(x);
  };
  TruncatedGreen r;
  r.method = tree ? "tree-recursion" : "ball-gauss-seidel";
  r.lower = value_at(horizon);
  r.estimate = r.lower;
  // Horizons H-4, H-2, H: on periodic structures the error is geometric
  // only along every other horizon.
  const std::size_t lag = horizon >= x.length() + mu.reach() + 4 ? 2 : 1;
  if (horizon >= x.length() + mu.reach() + 2 * lag) {
    const double g0 = value_at(horizon - 2 * lag), g1 = value_at(horizon - lag), g2 = r.lower;
    const double d1 = g1 - g0, d2 = g2 - g1;
    if (d1 > 0 && d2 >= 0 && d2 < d1) {
      const double q = d2 / d1;
      r.estimate = g2 + d2 * q / (1.0 - q);
    }
  }
  return r;
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  // 95% binomial half-width
  double half_width = 0.0;
  std::size_t trials = 0;
  std::size_t censored = 0;
};

// Fraction of walks from 1 that hit x before straying more than `cutoff`
// from the geodesic segment [1, x]. Never-hit is declared at the cutoff, so
// the bias is one-sided (downwards). Deterministic given the seed.
inline MonteCarloEstimate mc_first_passage(const GroupModel& model, const StepDistribution& mu,
                                           const Element& x, std::size_t trials, std::size_t cutoff,
                                           std::uint64_t seed) {
  model.check_same(x);
  if (trials == 0) throw PreconditionError("mc_first_passage needs at least one trial");
  MonteCarloEstimate r;
  r.trials = trials;
  if (x.is_identity()) {
    r.estimate = 1.0;
    return r;
  }
  const auto prefixes = model.geodesic_prefixes(x);
  const std::size_t step_cap = 1000 * (cutoff + x.length() + 1);
  Chunking chunks{trials, 2048};
  std::vector<std::size_t> hits(chunks.chunks(), 0), cens(chunks.chunks(), 0);
  parallel_tasks(chunks.chunks(), [&](std::size_t c) {
    Rng rng = make_rng(seed, c);
    for (std::size_t t = chunks.begin(c); t < chunks.end(c); ++t) {
      Word w;
      for (std::size_t s = 0;; ++s) {
        if (s >= step_cap) {
          ++cens[c];
          break;
        }
        const auto& inc = mu.element(mu.sample(rng)).word();
        if (model.is_free_product()) {
          for (Letter ch : inc) model.push_letter(w, ch);
        } else {
          Word v = w;
          v.insert(v.end(), inc.begin(), inc.end());
          w = model.reduce(v).word();
        }
        if (w == x.word()) {
          ++hits[c];
          break;
        }
        if (w.size() > x.length() + cutoff) break;
        if (w.size() <= cutoff) continue;  // d(w, 1) <= cutoff already
        std::size_t dist = static_cast<std::size_t>(-1);
        for (const auto& p : prefixes) dist = std::min(dist, model.distance_words(p.word(), w));
        if (dist > cutoff) break;
      }
    }
  });
  std::size_t total_hits = 0;
  for (std::size_t c = 0; c < hits.size(); ++c) {
    total_hits += hits[c];
    r.censored += cens[c];
  }
  const double p = static_cast<double>(total_hits) / static_cast<double>(trials);
  r.estimate = p;
  r.half_width = 1.96 * std::sqrt(std::max(p * (1 - p), 0.0) / static_cast<double>(trials));
  return r;
}

// K(g, xi) ~ G(g, y_k) / G(1, y_k) with y_k the depth-k point of a geodesic
// toward xi; G(g, y) = G(1, g^-1 y).
inline double martin_kernel_approx(const GroupModel& model, const GreenFunction& green,
                                   const Element& g, const std::vector<Element>& target_prefixes,
                                   std::size_t k) {
  if (k >= target_prefixes.size()) throw PreconditionError("martin_kernel_approx: depth out of range");
  const Element& y = target_prefixes[k];
  const Element gy = model.multiply(model.inverse(g), y);
  return green.green(gy) / green.green(y);
}

// Binary Green-value cache. Layout (little-endian):
//   "HWGC" | u32 version=1 | u32 alphabet size | u64 count |
//   count x ( u16 length | length x u8 letter | f64 value )
// Entries are written in lexicographic order of normal form.
inline void save_green_cache(const std::string& path, std::size_t alphabet,
                             const std::unordered_map<Word, double, WordHash>& values) {
  std::vector<std::pair<Word, double>> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write green cache: " + path);
  auto put = [&](const void* p, std::size_t n) { f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
  const char magic[4] = {'H', 'W', 'G', 'C'};
  const std::uint32_t version = 1, alpha = static_cast<std::uint32_t>(alphabet);
  const std::uint64_t count = sorted.size();
  put(magic, 4);
  put(&version, 4);
  put(&alpha, 4);
  put(&count, 8);
  for (const auto& [w, v] : sorted) {
    if (w.size() > 0xffff) throw Error("green cache: word too long");
    const std::uint16_t len = static_cast<std::uint16_t>(w.size());
    put(&len, 2);
    put(w.data(), w.size());
    put(&v, 8);
  }
}

inline std::unordered_map<Word, double, WordHash> load_green_cache(const std::string& path,
                                                                   std::size_t alphabet) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open green cache: " + path);
  auto get = [&](void* p, std::size_t n) {
    if (!f.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
      throw Error("green cache truncated: " + path);
  };
  char magic[4];
  std::uint32_t version = 0, alpha = 0;
  std::uint64_t count = 0;
  get(magic, 4);
  if (std::memcmp(magic, "HWGC", 4) != 0) throw Error("not a green cache file: " + path);
  get(&version, 4);
  if (version != 1) throw Error("unsupported green cache version");
  get(&alpha, 4);
  if (alpha != alphabet) throw Error("green cache alphabet size mismatch");
  get(&count, 8);
  std::unordered_map<Word, double, WordHash> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint16_t len = 0;
    get(&len, 2);
    Word w(len);
    get(w.data(), len);
    for (Letter c : w)
      if (c >= alphabet) throw Error("green cache letter out of range");
    double v = 0;
    get(&v, 8);
    out.emplace(std::move(w), v);
  }
  return out;
}

// Picks the exact tree backend when possible, else a ball solve of radius
// `horizon`.
inline std::unique_ptr<GreenFunction> make_green(const GroupModel& model, const StepDistribution& mu,
                                                 std::size_t horizon, Budget budget = {}) {
  if (model.is_tree_like() && mu.nearest_neighbor())
    return std::make_unique<TreeGreen>(model, mu);
  return std::make_unique<BallGreen>(solve_ball_green(model, mu, horizon, 1e-14, budget));
}

}  // namespace hyperwalk
