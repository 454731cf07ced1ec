#pragma once

// Finitary experiments: fundamental-inequality report, annulus hitting
// statistics K_n(a), and confinement-set growth.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "automaton.hpp"
#include "common.hpp"
#include "green.hpp"
#include "group_model.hpp"
#include "step_distribution.hpp"
#include "thermo.hpp"
#include "walk_stats.hpp"

namespace hyperwalk {

class CalibrationError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- fundamental

struct FundamentalOptions {
  std::size_t steps = 2000;
  std::size_t replicas = 400;
  std::uint64_t seed = 1;
  std::size_t potential_depth = 1;
  std::size_t rigidity_depth = 8;
  double affine_tol = 1e-6;
  Budget budget{};
};

struct FundamentalReport {
  double growth = std::numeric_limits<double>::quiet_NaN();
  EstimateWithError drift, entropy, dimension;
  // l v - h and its combined standard error sqrt(se_h^2 + v^2 se_l^2)
  double gap = std::numeric_limits<double>::quiet_NaN();
  double gap_se = std::numeric_limits<double>::quiet_NaN();
  // same, from per-replica differences (the two estimators share walks)
  double paired_se = std::numeric_limits<double>::quiet_NaN();
  // max (beta_{i+1} - 2 beta_i + beta_{i-1}) / h^2 on [0,1], and the raw maximum
  double beta_max_curvature = std::numeric_limits<double>::quiet_NaN();
  double beta_max_second_difference = std::numeric_limits<double>::quiet_NaN();
  bool beta_affine = false;
  // max - min of log G(1,g) + v|g| over 1 <= |g| <= rigidity_depth
  double rigidity_spread = std::numeric_limits<double>::quiet_NaN();
  // equality-consistent | strict | inconclusive | inconsistent | incomplete
  std::string verdict = "incomplete";
  std::vector<std::string> errors;
};

inline FundamentalReport fundamental_report(const GroupModel& model, const StepDistribution& mu,
                                            const Automaton& aut, const GreenFunction& green,
                                            const FundamentalOptions& opt = {}) {
  FundamentalReport r;
  auto guard = [&](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      r.errors.push_back(std::string(what) + ": " + e.what());
    }
  };
  guard("growth", [&] { r.growth = growth_rate(aut); });
  WalkSamples s;
  guard("walk", [&] {
    s = sample_walks(model, mu, &green, opt.steps, opt.replicas, opt.seed);
    r.drift = mean_estimate(s.drift, "drift");
    r.entropy = mean_estimate(s.green_speed, "green-speed/" + green.method());
    r.dimension = ratio_estimate(s.green_speed, s.drift, "green-speed/drift");
  });
  guard("pressure", [&] {
    auto scheme = build_potential(aut, model, green, opt.potential_depth, opt.budget);
    const double h = 0.05;
    auto curve = beta_curve(scheme, make_grid(0.0, 1.0, h));
    double mc = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < curve.theta.size(); ++i) mc = std::max(mc, curve.curvature[i]);
    r.beta_max_curvature = mc;
    r.beta_max_second_difference = mc * h * h;
    r.beta_affine = std::abs(mc) < opt.affine_tol;
  });
  guard("rigidity", [&] {
    if (!std::isfinite(r.growth)) throw PreconditionError("growth rate unavailable");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t n = 1; n <= opt.rigidity_depth; ++n)
      for_each_sphere_word(
          model, n,
          [&](const Word& w) {
            const double v = green.log_green_word(w) + r.growth * static_cast<double>(n);
            lo = std::min(lo, v), hi = std::max(hi, v);
          },
          opt.budget);
    r.rigidity_spread = hi - lo;
  });
  if (std::isfinite(r.growth) && !s.drift.empty()) {
    r.gap = r.growth * r.drift.value - r.entropy.value;
    r.gap_se = std::sqrt(r.entropy.std_error * r.entropy.std_error +
                         r.growth * r.growth * r.drift.std_error * r.drift.std_error);
    std::vector<double> d(s.drift.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = r.growth * s.drift[i] - s.green_speed[i];
    r.paired_se = mean_estimate(d, "gap").std_error;
    // floating-point floor: both estimators are sums of ~N logs
    const double tol = 1e-9;
    if (std::abs(r.gap) <= 3 * r.gap_se + tol)
      r.verdict = "equality-consistent";
    else if (r.gap > 4 * r.gap_se)
      r.verdict = "strict";
    else if (r.gap < -4 * r.gap_se)
      r.verdict = "inconsistent";
    else
      r.verdict = "inconclusive";
  }
  return r;
}

// ---------------------------------------------------------------- hitting

struct HittingRecord {
  std::size_t n = 0;
  std::size_t walks = 0;
  // walks that did not reach the annulus within the step cap
  std::size_t excluded = 0;
  // empirical nu_[n]: sorted by mass descending, ties in lexicographic order
  std::vector<std::pair<Word, double>> masses;
  std::vector<double> a;
  std::vector<std::size_t> k;
  // (1/n) log K_n(a); -inf when K = 0
  std::vector<double> exponent;
  double mass_sum = 0;
  double target = std::numeric_limits<double>::quiet_NaN();

  std::size_t distinct() const noexcept { return masses.size(); }
};

// Minimal number of points carrying mass >= a, greedy on the sorted masses.
inline std::size_t covering_number(const std::vector<std::pair<Word, double>>& sorted, double a) {
  if (a <= 0) return 0;
  if (a >= 1) return sorted.size();
  double acc = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    acc += sorted[i].second;
    if (acc >= a - 1e-12) return i + 1;
  }
  return sorted.size();
}

// Walks run until |x| >= n_max; for each n <= n_max the first point with
// |x| >= n is recorded (annulus n <= |x| < n + reach).
inline std::vector<HittingRecord> hitting_experiment(const GroupModel& model, const StepDistribution& mu,
                                                     std::size_t n_max, std::size_t walks,
                                                     const std::vector<double>& a_list, std::uint64_t seed,
                                                     double target = std::numeric_limits<double>::quiet_NaN(),
                                                     std::size_t step_cap = 1'000'000) {
  if (mu.model_id() != model.id()) throw ModelError("step distribution built for a different model");
  if (n_max == 0 || walks == 0) throw PreconditionError("hitting experiment needs n >= 1 and walks >= 1");
  for (double a : a_list)
    if (!(a >= 0 && a <= 1)) throw PreconditionError("hitting levels a must lie in [0,1]");
  Chunking chunks{walks, 4096};
  // counts[chunk][n-1][point]
  std::vector<std::vector<std::map<Word, std::size_t>>> counts(chunks.chunks(),
                                                               std::vector<std::map<Word, std::size_t>>(n_max));
  std::vector<std::size_t> failed(chunks.chunks(), 0);
  parallel_tasks(chunks.chunks(), [&](std::size_t c) {
    Rng rng = make_rng(seed, c);
    std::vector<Word> first(n_max);
    for (std::size_t t = chunks.begin(c); t < chunks.end(c); ++t) {
      Word w;
      std::size_t level = 0, s = 0;
      while (level < n_max && s < step_cap) {
        apply_step(model, w, mu.element(mu.sample(rng)).word());
        ++s;
        while (level < n_max && w.size() >= level + 1) first[level++] = w;
      }
      if (level < n_max) {
        ++failed[c];
        continue;
      }
      for (std::size_t n = 0; n < n_max; ++n) ++counts[c][n][first[n]];
    }
  });
  std::size_t excluded = 0;
  for (auto f : failed) excluded += f;
  const std::size_t used = walks - excluded;
  if (used == 0) throw ConvergenceError("no walk reached the annulus within the step cap");
  std::vector<HittingRecord> out;
  for (std::size_t n = 1; n <= n_max; ++n) {
    std::map<Word, std::size_t> all;
    for (const auto& c : counts)
      for (const auto& [w, k] : c[n - 1]) all[w] += k;
    HittingRecord r;
    r.n = n;
    r.walks = walks;
    r.excluded = excluded;
    r.target = target;
    // map order is lexicographic; stable sort keeps it among equal masses
    std::vector<std::pair<Word, std::size_t>> v(all.begin(), all.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    r.masses.reserve(v.size());
    for (const auto& [w, k] : v) {
      const double p = static_cast<double>(k) / static_cast<double>(used);
      r.masses.emplace_back(w, p);
      r.mass_sum += p;
    }
    for (double a : a_list) {
      const std::size_t k = covering_number(r.masses, a);
      r.a.push_back(a);
      r.k.push_back(k);
      r.exponent.push_back(k == 0 ? -std::numeric_limits<double>::infinity()
                                  : std::log(static_cast<double>(k)) / static_cast<double>(n));
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------- confinement

// Membership in V_a and Gamma_a on a Cayley tree with the exact product
// formula G(1,x) = G(1,1) prod F(letters). With W(x) = -sum log F(x_i) and
// slack delta_n = c n^-p (so n delta_n = c s(n), s(n) = n^(1-p)):
//   x in V_a      iff  W(x) - log G(1,1) <= |x| h + c s(|x|)
//   x in Gamma_a  iff  some y in V_a has d(x,y) <= c s(|y|).
// critical_slack(x) is the least c for which x lies in Gamma_a.
class ConfinementGeometry {
 public:
  ConfinementGeometry(const GroupModel& model, const FirstPassageTable& table, double target, double power = 0.5,
                      std::size_t max_branch = 256)
      : model_(&model), target_(target), power_(power), log_g11_(std::log(table.green_identity)) {
    if (!(power >= 0 && power <= 1)) throw PreconditionError("slack exponent p must lie in [0,1]");
    if (!cayley_tree(model)) throw PreconditionError("confinement counting needs a Cayley tree (Z and Z2 factors)");
    const std::size_t k = model.alphabet_size();
    w_.resize(k);
    for (Letter l = 0; l < k; ++l) w_[l] = -std::log(table.letter[l]);
    allowed_.assign(k, std::vector<bool>(k));
    for (Letter x = 0; x < k; ++x)
      for (Letter y = 0; y < k; ++y) allowed_[x][y] = model.extends(Word{x}, y);
    // best_[k][l]: least weight of a normal-form word of length k starting with l
    best_.assign(max_branch + 1, std::vector<double>(k, 0.0));
    for (Letter l = 0; l < k; ++l) best_[1][l] = w_[l];
    for (std::size_t len = 2; len <= max_branch; ++len)
      for (Letter l = 0; l < k; ++l) {
        double m = std::numeric_limits<double>::infinity();
        for (Letter y = 0; y < k; ++y)
          if (allowed_[l][y]) m = std::min(m, best_[len - 1][y]);
        best_[len][l] = w_[l] + m;
      }
  }

  double letter_weight(Letter l) const { return w_[l]; }
  double target() const noexcept { return target_; }
  double scale(std::size_t n) const { return std::pow(static_cast<double>(n), 1.0 - power_); }

  bool in_v(double weight, std::size_t n, double c) const {
    return weight - log_g11_ <= static_cast<double>(n) * target_ + c * scale(n);
  }

  // prefix[j] = W(x_1..x_j), j = 0..n. Returns the least c with x in Gamma_a.
  // With a finite `cap` it only decides membership: any value <= cap means
  // "inside", +inf means "outside".
  double critical_slack(const Word& x, const std::vector<double>& prefix,
                        double cap = std::numeric_limits<double>::infinity()) const {
    const std::size_t n = x.size();
    if (n == 0) return log_g11_ >= 0 ? 0.0 : std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    const std::size_t dmax_table = best_.size() - 1;
    for (std::size_t d = 0;; ++d) {
      const double lower = static_cast<double>(d) / scale(n + d);
      if (lower >= best || lower > cap || d > n + dmax_table) break;
      for (std::size_t back = 0; back <= std::min(d, n); ++back) {
        const std::size_t j = n - back, k = d - back;
        if (k > dmax_table) continue;
        const std::size_t len = j + k;
        if (len == 0) continue;
        double wz = 0;
        if (k > 0) {
          wz = std::numeric_limits<double>::infinity();
          for (Letter l = 0; l < w_.size(); ++l) {
            if (j > 0 && !allowed_[x[j - 1]][l]) continue;
            if (back > 0 && l == x[j]) continue;
            wz = std::min(wz, best_[k][l]);
          }
          if (!std::isfinite(wz)) continue;
        }
        const double root = scale(len);
        const double need_v = (prefix[j] + wz - log_g11_ - static_cast<double>(len) * target_) / root;
        const double need = std::max({0.0, need_v, static_cast<double>(d) / root});
        best = std::min(best, need);
        if (std::isfinite(cap) && best <= cap) return best;
      }
    }
    return best;
  }

 private:
  const GroupModel* model_;
  double target_;
  double power_;
  double log_g11_;
  std::vector<double> w_;
  std::vector<std::vector<bool>> allowed_;
  std::vector<std::vector<double>> best_;
};

struct ConfinementLevel {
  std::size_t n = 0;
  std::size_t sphere = 0;
  std::size_t gamma = 0;
  std::size_t v_set = 0;
  double gamma_exponent = 0;
  double v_exponent = 0;
};

struct ConfinementOptions {
  double a = 0.2;
  std::size_t n_max = 14;
  std::size_t walks = 1000;
  std::size_t walk_steps = 400;
  std::uint64_t seed = 1;
  // delta_n = c n^-power
  double power = 0.5;
  // fixed slack constant; calibrated when empty
  std::optional<double> c;
  double c_max = 20.0;
  Budget budget{};
};

struct ConfinementReport {
  double a = 0;
  // h/l used in V_a
  double target = 0;
  double growth = 0;
  double c = 0;
  bool calibrated = false;
  // fraction of simulated walks that stay in Gamma_a for every step
  double coverage = 0;
  std::size_t walks = 0;
  std::vector<ConfinementLevel> levels;
  // (1/n) log |Gamma_a cap S_n| at n_max
  double exponent = 0;
};

inline ConfinementReport confinement_experiment(const GroupModel& model, const StepDistribution& mu,
                                                const FirstPassageTable& table, double target, double growth,
                                                const ConfinementOptions& opt) {
  if (!(opt.a > 0 && opt.a < 1)) throw PreconditionError("confinement level a must lie in (0,1)");
  if (opt.walks == 0 || opt.n_max == 0) throw PreconditionError("confinement needs walks >= 1 and n_max >= 1");
  ConfinementGeometry geo(model, table, target, opt.power);
  ConfinementReport rep;
  rep.a = opt.a;
  rep.target = target;
  rep.growth = growth;
  rep.walks = opt.walks;

  // per-walk least slack keeping the whole trajectory inside Gamma_a
  std::vector<double> need(opt.walks, 0.0);
  parallel_tasks(opt.walks, [&](std::size_t r) {
    Rng rng = make_rng(opt.seed, r);
    Word w, prev;
    std::vector<double> prefix{0.0};
    double worst = 0;
    for (std::size_t s = 0; s < opt.walk_steps; ++s) {
      apply_step(model, w, mu.element(mu.sample(rng)).word());
      std::size_t keep = 0;
      while (keep < w.size() && keep < prev.size() && w[keep] == prev[keep]) ++keep;
      prefix.resize(keep + 1);
      for (std::size_t i = keep; i < w.size(); ++i) prefix.push_back(prefix.back() + geo.letter_weight(w[i]));
      prev = w;
      worst = std::max(worst, geo.critical_slack(w, prefix));
    }
    need[r] = worst;
  });
  std::vector<double> sorted = need;
  std::sort(sorted.begin(), sorted.end());
  const double q = 1.0 - opt.a;
  if (opt.c) {
    rep.c = *opt.c;
  } else {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(opt.walks) - 1e-9));
    rep.c = sorted[std::max<std::size_t>(idx, 1) - 1];
    rep.calibrated = true;
    if (!(rep.c <= opt.c_max))
      throw CalibrationError("slack calibration failed: coverage " + std::to_string(q) + " needs c = " +
                             std::to_string(rep.c) + " > c_max = " + std::to_string(opt.c_max));
  }
  std::size_t inside = 0;
  for (double v : need) inside += v <= rep.c ? 1 : 0;
  rep.coverage = static_cast<double>(inside) / static_cast<double>(opt.walks);
  if (rep.coverage < q - 1e-12)
    throw CalibrationError("slack c = " + std::to_string(rep.c) + " keeps only " + std::to_string(rep.coverage) +
                           " of walks confined; need " + std::to_string(q));

  // enumerate S_1..S_nmax and test membership
  rep.levels.resize(opt.n_max);
  for (std::size_t n = 1; n <= opt.n_max; ++n) rep.levels[n - 1].n = n;
  const std::size_t k = model.alphabet_size();
  std::vector<std::vector<ConfinementLevel>> partial(k, rep.levels);
  std::vector<std::size_t> visited(k, 0);
  parallel_tasks(k, [&](std::size_t first) {
    Word w{static_cast<Letter>(first)};
    std::vector<double> prefix{0.0, geo.letter_weight(static_cast<Letter>(first))};
    auto& lv = partial[first];
    // iterative DFS over normal forms
    std::vector<Letter> next{0};
    auto visit = [&] {
      auto& L = lv[w.size() - 1];
      ++L.sphere;
      if (geo.in_v(prefix.back(), w.size(), rep.c)) ++L.v_set;
      if (geo.critical_slack(w, prefix, rep.c) <= rep.c) ++L.gamma;
      opt.budget.check(++visited[first], "confinement enumeration");
    };
    visit();
    while (!w.empty()) {
      if (w.size() == opt.n_max || next.back() >= k) {
        w.pop_back();
        prefix.pop_back();
        next.pop_back();
        continue;
      }
      const Letter y = static_cast<Letter>(next.back()++);
      if (!model.extends(w, y)) continue;
      w.push_back(y);
      prefix.push_back(prefix.back() + geo.letter_weight(y));
      next.push_back(0);
      visit();
    }
  });
  for (const auto& p : partial)
    for (std::size_t i = 0; i < p.size(); ++i) {
      rep.levels[i].sphere += p[i].sphere;
      rep.levels[i].gamma += p[i].gamma;
      rep.levels[i].v_set += p[i].v_set;
    }
  for (auto& L : rep.levels) {
    const double n = static_cast<double>(L.n);
    L.gamma_exponent = L.gamma ? std::log(static_cast<double>(L.gamma)) / n : -std::numeric_limits<double>::infinity();
    L.v_exponent = L.v_set ? std::log(static_cast<double>(L.v_set)) / n : -std::numeric_limits<double>::infinity();
  }
  rep.exponent = rep.levels.back().gamma_exponent;
  return rep;
}

}  // namespace hyperwalk
