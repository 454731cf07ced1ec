#pragma once

// Boundary measures on cones/shadows: exact harmonic measure on tree-like
// models, Monte Carlo cone-hitting frequencies, sphere-weighted mu_theta
// surrogates, Gibbs ratios, stationarity residuals and local dimensions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "green.hpp"
#include "group_model.hpp"
#include "step_distribution.hpp"
#include "thermo.hpp"
#include "walk_stats.hpp"

namespace hyperwalk {

// Letters that may not follow `x` in a normal form (same factor, except
// powers of an infinite-order generator).
inline std::vector<Letter> forbidden_after(const GroupModel& model, Letter x) {
  std::vector<Letter> out;
  for (Letter y = 0; y < model.alphabet_size(); ++y)
    if (!model.extends(Word{x}, y)) out.push_back(y);
  return out;
}

// nu(C(l)) for each single letter l, for the harmonic measure of a
// nearest-neighbour walk on a tree-like model:
//   nu_l = F(l) (1 - sum_{l' forbidden after l} nu_{l'}).
inline std::vector<double> harmonic_letter_masses(const GroupModel& model, const FirstPassageTable& t) {
  const auto k = static_cast<Eigen::Index>(model.alphabet_size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd b(k);
  for (Letter l = 0; l < k; ++l) {
    b[l] = t.letter[l];
    for (Letter f : forbidden_after(model, l)) a(l, f) += t.letter[l];
  }
  Eigen::VectorXd nu = a.partialPivLu().solve(b);
  return std::vector<double>(nu.data(), nu.data() + k);
}

struct ShadowMass {
  double mass = 0;
  // exact: linear-solve residual; monte-carlo: 95% half-width
  double error = 0;
  std::string method;
};

class HarmonicMeasure {
 public:
  HarmonicMeasure(const GroupModel& model, const StepDistribution& mu)
      : HarmonicMeasure(model, solve_tree_first_passage(model, mu)) {}
  HarmonicMeasure(const GroupModel& model, FirstPassageTable table)
      : model_(&model), table_(std::move(table)), letter_(harmonic_letter_masses(model, table_)) {
    double worst = 0;
    for (Letter l = 0; l < model.alphabet_size(); ++l) {
      double rhs = 1;
      for (Letter f : forbidden_after(model, l)) rhs -= letter_[f];
      worst = std::max(worst, std::abs(letter_[l] - table_.letter[l] * rhs));
    }
    residual_ = worst;
  }

  // nu(C(x)) = F(1, x) (1 - sum over letters forbidden after the last letter).
  double cone(const Element& x) const {
    model_->check_same(x);
    if (x.is_identity()) return 1.0;
    double f = 1.0;
    for (Letter c : x.word()) f *= table_.letter[c];
    double rest = 1.0;
    for (Letter l : forbidden_after(*model_, x.word().back())) rest -= letter_[l];
    return f * rest;
  }
  const std::vector<double>& letter_masses() const noexcept { return letter_; }
  double residual() const noexcept { return residual_; }

 private:
  const GroupModel* model_;
  FirstPassageTable table_;
  std::vector<double> letter_;
  double residual_ = 0;
};

// Fraction of walks whose position, when it first reaches |w| >= |x| + buffer,
// lies in the shadow of x (the cone on trees). One-sided boundary proxy.
inline ShadowMass harmonic_shadow_mass_mc(const GroupModel& model, const StepDistribution& mu, const ShadowSpec& spec,
                                          std::size_t walks, std::uint64_t seed, std::size_t buffer = 20,
                                          std::size_t step_cap = 1'000'000) {
  const Element& x = spec.apex();
  ShadowMass r;
  r.method = "monte-carlo";
  if (x.is_identity()) {
    r.mass = 1;
    return r;
  }
  if (walks == 0) throw PreconditionError("need at least one walk");
  const std::size_t target = x.length() + buffer;
  Chunking chunks{walks, 2048};
  std::vector<std::size_t> hits(chunks.chunks(), 0), done(chunks.chunks(), 0);
  parallel_tasks(chunks.chunks(), [&](std::size_t c) {
    Rng rng = make_rng(seed, c);
    for (std::size_t t = chunks.begin(c); t < chunks.end(c); ++t) {
      Word w;
      std::size_t s = 0;
      for (; s < step_cap && w.size() < target; ++s) apply_step(model, w, mu.element(mu.sample(rng)).word());
      if (w.size() < target) continue;
      ++done[c];
      if (shadow_contains(model, spec, model.from_normal_form(w))) ++hits[c];
    }
  });
  std::size_t h = 0, n = 0;
  for (std::size_t c = 0; c < hits.size(); ++c) h += hits[c], n += done[c];
  if (n == 0) throw ConvergenceError("no walk reached the target radius");
  const double p = static_cast<double>(h) / static_cast<double>(n);
  r.mass = p;
  r.error = 1.96 * std::sqrt(p * (1 - p) / static_cast<double>(n));
  return r;
}

// Harmonic mass of the shadow of x: "exact-tree" (cone, R = 0) or
// "monte-carlo".
inline ShadowMass harmonic_shadow_mass(const GroupModel& model, const StepDistribution& mu, const ShadowSpec& spec,
                                       const std::string& method, std::size_t walks = 100000,
                                       std::uint64_t seed = 1) {
  if (method == "exact-tree") {
    if (!model.is_tree_like() || !mu.nearest_neighbor())
      throw PreconditionError("exact-tree harmonic measure needs a tree-like model and nearest-neighbour steps");
    if (spec.radius() != 0) throw PreconditionError("exact-tree harmonic measure is defined on cones (R = 0)");
    HarmonicMeasure h(model, mu);
    return {h.cone(spec.apex()), h.residual(), "exact-tree"};
  }
  if (method == "monte-carlo") return harmonic_shadow_mass_mc(model, mu, spec, walks, seed);
  throw PreconditionError("unknown harmonic-measure method: " + method);
}

// Masses of the disjoint cones C(x), |x| = depth (tree-like models).
struct ShadowMeasure {
  std::size_t depth = 0;
  std::string method;
  std::map<Word, double> masses;
  // |sum of masses - 1|
  double normalization_residual = 0;
  // largest per-cone error reported by the method
  double error = 0;

  double total() const {
    double s = 0;
    for (const auto& kv : masses) s += kv.second;
    return s;
  }
};

inline void finish_measure(ShadowMeasure& m) { m.normalization_residual = std::abs(m.total() - 1.0); }

inline ShadowMeasure harmonic_table_exact(const GroupModel& model, const StepDistribution& mu, std::size_t depth,
                                          Budget budget = {}) {
  HarmonicMeasure h(model, mu);
  ShadowMeasure m;
  m.depth = depth;
  m.method = "exact-tree";
  for_each_sphere_word(model, depth, [&](const Word& w) { m.masses[w] = h.cone(model.from_normal_form(w)); }, budget);
  m.error = h.residual();
  finish_measure(m);
  return m;
}

inline ShadowMeasure harmonic_table_mc(const GroupModel& model, const StepDistribution& mu, std::size_t depth,
                                       std::size_t walks, std::uint64_t seed, std::size_t buffer = 20) {
  if (walks == 0) throw PreconditionError("need at least one walk");
  const std::size_t target = depth + buffer;
  Chunking chunks{walks, 2048};
  std::vector<std::map<Word, std::size_t>> counts(chunks.chunks());
  parallel_tasks(chunks.chunks(), [&](std::size_t c) {
    Rng rng = make_rng(seed, c);
    for (std::size_t t = chunks.begin(c); t < chunks.end(c); ++t) {
      Word w;
      while (w.size() < target) apply_step(model, w, mu.element(mu.sample(rng)).word());
      ++counts[c][Word(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(depth))];
    }
  });
  std::map<Word, std::size_t> all;
  for (const auto& c : counts)
    for (const auto& [w, n] : c) all[w] += n;
  ShadowMeasure m;
  m.depth = depth;
  m.method = "monte-carlo";
  const double n = static_cast<double>(walks);
  for (const auto& [w, k] : all) {
    const double p = static_cast<double>(k) / n;
    m.masses[w] = p;
    m.error = std::max(m.error, 1.96 * std::sqrt(p * (1 - p) / n));
  }
  finish_measure(m);
  return m;
}

// Sphere-weighted surrogate for mu_theta on the cones of depth `depth`:
// weights G(1,y)^theta on S_n, normalized, summed over each cone.
inline ShadowMeasure mutheta_table(const GroupModel& model, const GreenFunction& green, double theta,
                                   std::size_t depth, std::size_t n, Budget budget = {}) {
  if (depth > n) throw PreconditionError("cone depth exceeds sphere radius");
  std::vector<std::pair<Word, double>> pts;
  for_each_sphere_word(model, n, [&](const Word& w) { pts.emplace_back(w, theta * green.log_green_word(w)); }, budget);
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& p : pts) top = std::max(top, p.second);
  double z = 0;
  for (const auto& p : pts) z += std::exp(p.second - top);
  ShadowMeasure m;
  m.depth = depth;
  m.method = "sphere-weighted";
  for (const auto& [w, l] : pts)
    m.masses[Word(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(depth))] += std::exp(l - top) / z;
  finish_measure(m);
  return m;
}

// Sphere points of S_n with their log G(1, .), cached for repeated shadow sums.
struct SphereWeights {
  std::size_t n = 0;
  std::vector<Element> points;
  std::vector<double> log_green;
};

inline SphereWeights sphere_weights(const GroupModel& model, const GreenFunction& green, std::size_t n,
                                    Budget budget = {}) {
  SphereWeights s;
  s.n = n;
  for_each_sphere_word(
      model, n,
      [&](const Word& w) {
        s.points.push_back(model.from_normal_form(w));
        s.log_green.push_back(green.log_green_word(w));
      },
      budget);
  return s;
}

// log of sum_{y in S_n, y in S(x,R)} G^theta / sum_{y in S_n} G^theta.
inline double mutheta_log_mass(const GroupModel& model, const SphereWeights& sw, double theta, const ShadowSpec& spec) {
  if (spec.apex().length() > sw.n) throw PreconditionError("apex deeper than the sphere");
  double top = -std::numeric_limits<double>::infinity();
  for (double l : sw.log_green) top = std::max(top, theta * l);
  double z = 0, in = 0;
  const bool cone = spec.radius() == 0 && model.is_free_product() && model.delta() == 0;
  const Word& apex = spec.apex().word();
  for (std::size_t i = 0; i < sw.points.size(); ++i) {
    const double w = std::exp(theta * sw.log_green[i] - top);
    z += w;
    const Word& y = sw.points[i].word();
    const bool inside = cone ? std::equal(apex.begin(), apex.end(), y.begin())
                             : shadow_contains(model, spec, sw.points[i]);
    if (inside) in += w;
  }
  return std::log(in) - std::log(z);
}

inline double mutheta_shadow_mass(const GroupModel& model, const GreenFunction& green, double theta,
                                  const ShadowSpec& spec, std::size_t n, Budget budget = {}) {
  return std::exp(mutheta_log_mass(model, sphere_weights(model, green, n, budget), theta, spec));
}

// `count` distinct apexes with 1 <= |g| <= max_len, drawn uniformly from the
// ball without replacement; lexicographic output order.
inline std::vector<Element> sample_apexes(const GroupModel& model, std::size_t max_len, std::size_t count,
                                          std::uint64_t seed, Budget budget = {}) {
  std::vector<Element> pool;
  auto ball = ball_enumerate(model, max_len, budget);
  for (std::size_t k = 1; k < ball.size(); ++k) pool.insert(pool.end(), ball[k].begin(), ball[k].end());
  Rng rng = make_rng(seed, 0);
  count = std::min(count, pool.size());
  // partial Fisher-Yates
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct GibbsRow {
  Element apex;
  double log_mass = 0;
  double log_reference = 0;
  // log_mass - log_reference
  double log_ratio = 0;
};

struct GibbsReport {
  std::vector<GibbsRow> rows;
  double min = 0, max = 0, spread = 0;
  double bound = 0;
  bool pass = false;
  std::string method;
};

inline void summarize(GibbsReport& r) {
  if (r.rows.empty()) throw PreconditionError("gibbs report needs at least one apex");
  r.min = r.max = r.rows.front().log_ratio;
  for (const auto& row : r.rows) r.min = std::min(r.min, row.log_ratio), r.max = std::max(r.max, row.log_ratio);
  r.spread = r.max - r.min;
  r.pass = r.spread < r.bound;
}

// log[ mu_theta(S(g,R)) / (G(1,g)^theta e^{-beta |g|}) ] over the apexes,
// with mu_theta from sphere weights on S_n.
inline GibbsReport gibbs_ratio_report(const GroupModel& model, const GreenFunction& green, double theta, double beta,
                                      const std::vector<Element>& apexes, std::size_t n, double radius, double bound,
                                      Budget budget = {}) {
  auto sw = sphere_weights(model, green, n, budget);
  GibbsReport r;
  r.bound = bound;
  r.method = "sphere-weighted";
  r.rows.resize(apexes.size());
  parallel_tasks(apexes.size(), [&](std::size_t i) {
    const auto& g = apexes[i];
    GibbsRow row{g};
    row.log_mass = mutheta_log_mass(model, sw, theta, ShadowSpec(model, g, radius));
    row.log_reference = theta * green.log_green(g) - beta * static_cast<double>(g.length());
    row.log_ratio = row.log_mass - row.log_reference;
    r.rows[i] = row;
  });
  summarize(r);
  return r;
}

// log[ nu(S(g,R)) / G(1,g) ] for the harmonic measure (theta = 1, beta = 0).
inline GibbsReport harmonic_gibbs_report(const GroupModel& model, const StepDistribution& mu,
                                         const GreenFunction& green, const std::vector<Element>& apexes,
                                         const std::string& method, double bound, std::size_t walks = 100000,
                                         std::uint64_t seed = 1) {
  GibbsReport r;
  r.bound = bound;
  r.method = method;
  std::unique_ptr<HarmonicMeasure> exact;
  if (method == "exact-tree") exact = std::make_unique<HarmonicMeasure>(model, mu);
  for (std::size_t i = 0; i < apexes.size(); ++i) {
    const auto& g = apexes[i];
    GibbsRow row{g};
    const double mass = exact ? exact->cone(g)
                              : harmonic_shadow_mass(model, mu, ShadowSpec(model, g, 0), method, walks, seed + i).mass;
    row.log_mass = std::log(mass);
    row.log_reference = green.log_green(g);
    row.log_ratio = row.log_mass - row.log_reference;
    r.rows.push_back(row);
  }
  summarize(r);
  return r;
}

// Prefix-summed cone masses: nu(C(y)) for every |y| <= depth.
inline std::unordered_map<Word, double, WordHash> cone_algebra(const ShadowMeasure& m) {
  std::unordered_map<Word, double, WordHash> out;
  for (const auto& [w, p] : m.masses)
    for (std::size_t k = 0; k <= w.size(); ++k) out[Word(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(k))] += p;
  return out;
}

struct StationarityReport {
  // L1 distance of nu and mu*nu on the tested cone partition
  double residual = 0;
  // largest single-cone discrepancy
  double max_cone_error = 0;
  // depth of the cones on which the identity was tested
  std::size_t tested_depth = 0;
  Word worst_cone;
};

// sum over cones C(x), |x| = depth - reach, of
//   | nu(C(x)) - sum_g mu(g) nu(g^-1 C(x)) |.
// A per-cone maximum would shrink like the cone masses with depth.
// with g^-1 C(x) re-expressed exactly in the cone algebra of the table.
inline StationarityReport stationarity_residual(const GroupModel& model, const ShadowMeasure& m,
                                                const StepDistribution& mu) {
  if (!model.is_tree_like()) throw PreconditionError("exact cone re-expression needs a tree-like model");
  const std::size_t r = mu.reach();
  if (m.depth < r + 1) throw PreconditionError("cone algebra too shallow for the step support");
  const auto alg = cone_algebra(m);
  auto nu = [&](const Word& y) {
    auto it = alg.find(y);
    return it == alg.end() ? 0.0 : it->second;
  };
  StationarityReport rep;
  rep.tested_depth = m.depth - r;
  for_each_sphere_word(model, rep.tested_depth, [&](const Word& x) {
    double pushed = 0;
    for (const auto& a : mu.atoms()) {
      // g^-1 x
      Word y = model.inverse_word(a.element.word());
      for (Letter c : x) model.push_letter(y, c);
      const Letter last = x.back();
      double mass;
      if (!y.empty() && forbidden_after(model, y.back()) == forbidden_after(model, last) &&
          model.factor_of(y.back()) == model.factor_of(last)) {
        mass = nu(y);
      } else if (y.empty()) {
        mass = 1.0;
        for (Letter f : forbidden_after(model, last)) mass -= nu(Word{f});
      } else {
        throw PreconditionError("cone algebra too shallow to express a translated cone");
      }
      pushed += a.probability * mass;
    }
    const double diff = std::abs(nu(x) - pushed);
    rep.residual += diff;
    if (rep.worst_cone.empty() || diff > rep.max_cone_error) {
      rep.worst_cone = x;
      rep.max_cone_error = diff;
    }
  });
  return rep;
}

struct LocalDimension {
  // per trajectory: -(1/n) log F(1, gamma(n)) for n = 1..n_max
  std::vector<std::vector<double>> sequences;
  // mean over trajectories at n_max, with standard error
  EstimateWithError at_n_max;
};

// Gibbs surrogate for the local dimension of nu along each trajectory's ray.
inline LocalDimension local_dimension_samples(const GroupModel& model, const GreenFunction& green,
                                              const std::vector<Trajectory>& trajectories, std::size_t n_max) {
  LocalDimension out;
  std::vector<double> last;
  for (const auto& t : trajectories) {
    if (t.final_position.size() < n_max)
      throw PreconditionError("trajectory ray shorter than the requested depth");
    std::vector<double> seq;
    const Word& w = t.final_position;
    const double lg1 = green.log_green_word(Word{});
    for (std::size_t n = 1; n <= n_max; ++n) {
      const Word prefix(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
      seq.push_back(-(green.log_green_word(prefix) - lg1) / static_cast<double>(n));
    }
    last.push_back(seq.back());
    out.sequences.push_back(std::move(seq));
  }
  out.at_n_max = mean_estimate(last, "gibbs-surrogate");
  return out;
}

}  // namespace hyperwalk
