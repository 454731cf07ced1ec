// Acceptance suite: one PASS/FAIL line per criterion, each with the measured
// quantities and wall time. Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperwalk/pipeline.hpp"

using namespace hyperwalk;

namespace {

#ifndef HYPERWALK_DATA_DIR
#define HYPERWALK_DATA_DIR "data"
#endif

const double kLog3 = std::log(3.0);

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // records one sub-check; every sub-check must hold
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [failed]");
  }
};

std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

struct Fixtures {
  const GroupModel f2 = GroupModel::builtin("F2");
  const GroupModel z2z3 = GroupModel::builtin("Z2*Z3");
  const StepDistribution uniform = StepDistribution::uniform(f2);
  const StepDistribution m2 = StepDistribution::builtin(f2, "M2");
  const StepDistribution z_uniform = StepDistribution::uniform(z2z3);
  const TreeGreen g_uniform{f2, uniform};
  const TreeGreen g_m2{f2, m2};
  const TreeGreen g_z{z2z3, z_uniform};
  const Automaton aut_f2 = Automaton::builtin(f2);
  const Automaton aut_z = Automaton::builtin(z2z3);
  const PotentialScheme s_uniform = build_potential(aut_f2, f2, g_uniform, 1);
  const PotentialScheme s_m2 = build_potential(aut_f2, f2, g_m2, 1);
  const PotentialScheme s_z = build_potential(aut_z, z2z3, g_z, 1);
};

Fixtures& fx() {
  static Fixtures f;
  return f;
}

double gibbs_bound(const std::string& method) {
  std::ifstream in(std::string(HYPERWALK_DATA_DIR) + "/fixtures/gibbs_bounds.json");
  if (!in) throw Error("missing fixture file data/fixtures/gibbs_bounds.json");
  return nlohmann::json::parse(in).at(method).get<double>();
}

// 1. closed-form Green function and Monte Carlo agreement
void c1(Outcome& o) {
  auto& f = fx();
  const double F = f.g_uniform.first_passage(f.f2.element("a"));
  const double G = f.g_uniform.green_identity();
  o.check(std::abs(F - 1.0 / 3) < 1e-12, "F(1,a)=" + num(F, 15));
  o.check(std::abs(G - 1.5) < 1e-12, "G(1,1)=" + num(G, 15));
  auto mc = mc_first_passage(f.f2, f.uniform, f.f2.element("a"), 100000, 30, 7);
  const double se = std::sqrt(mc.estimate * (1 - mc.estimate) / static_cast<double>(mc.trials));
  o.check(std::abs(mc.estimate - 1.0 / 3) < 3 * se,
          "MC F(1,a)=" + num(mc.estimate) + " (" + num(std::abs(mc.estimate - 1.0 / 3) / se, 3) + " SE)");
}

// 2. pressure at theta = 0 and 1
void c2(Outcome& o) {
  auto& f = fx();
  for (auto [name, s] : {std::pair{"F2 uniform", &f.s_uniform}, std::pair{"F2 M2", &f.s_m2}}) {
    const double b0 = pressure(*s, 0).beta, b1 = pressure(*s, 1).beta;
    o.check(std::abs(b0 - kLog3) < 1e-10 && std::abs(b1) < 1e-10,
            std::string(name) + " |b(0)-log3|=" + num(std::abs(b0 - kLog3), 3) + " |b(1)|=" + num(std::abs(b1), 3));
  }
  const double b0 = pressure(f.s_z, 0).beta, b1 = pressure(f.s_z, 1).beta;
  o.check(std::abs(b1) < 1e-8, "Z2*Z3 |b(1)|=" + num(std::abs(b1), 3));
  o.check(std::abs(b0 - 0.5 * std::log(2.0)) < 1e-10, "Z2*Z3 |b(0)-log2/2|=" + num(std::abs(b0 - 0.5 * std::log(2.0)), 3));
}

// 3. affine pressure and equality in the fundamental inequality
void c3(Outcome& o) {
  auto& f = fx();
  auto curve = beta_curve(f.s_uniform, make_grid(-2, 2, 0.05));
  double worst = 0;
  for (std::size_t i = 0; i < curve.theta.size(); ++i)
    worst = std::max(worst, std::abs(curve.beta[i] - (1 - curve.theta[i]) * kLog3));
  o.check(worst < 1e-9, "max |b-(1-t)log3|=" + num(worst, 3));
  auto sp = legendre(curve);
  o.check(sp.alpha_max - sp.alpha_min < 1e-6, "alpha range=" + num(sp.alpha_max - sp.alpha_min, 3));
  auto r = fundamental_report(f.f2, f.uniform, f.aut_f2, f.g_uniform);
  o.check(r.verdict == "equality-consistent" && std::abs(r.gap) <= 3 * r.gap_se,
          "verdict " + r.verdict + " l=" + num(r.drift.value, 4) + " h=" + num(r.entropy.value, 4) +
              " gap=" + num(r.gap, 3) + " se=" + num(r.gap_se, 3));
}

// 4. strictly convex pressure for the biased walk
void c4(Outcome& o) {
  auto& f = fx();
  auto curve = beta_curve(f.s_m2, make_grid(-1, 2, 0.05));
  double max_curv = -1;
  std::size_t at1 = 0;
  for (std::size_t i = 0; i < curve.theta.size(); ++i) {
    if (curve.theta[i] > -1e-9 && curve.theta[i] < 1 + 1e-9) max_curv = std::max(max_curv, curve.curvature[i]);
    if (std::abs(curve.theta[i] - 1) < 1e-9) at1 = i;
  }
  o.check(max_curv > 1e-3, "max curvature on [0,1]=" + num(max_curv, 4));
  auto sp = legendre(curve);
  bool concave = true;
  for (std::size_t i = 1; i + 1 < sp.points.size(); ++i) {
    // f as a function of alpha: slopes theta decrease as alpha increases
    const auto &a = sp.points[i - 1], &b = sp.points[i], &c = sp.points[i + 1];
    const double s1 = (b.f - a.f) / (b.alpha - a.alpha), s2 = (c.f - b.f) / (c.alpha - b.alpha);
    if (s2 < s1 - 1e-6) concave = false;
  }
  o.check(concave, "f concave");
  o.check(std::abs(sp.f_max - kLog3) < 1e-6 && std::abs(sp.theta_at_f_max) < 1e-9,
          "f_max=" + num(sp.f_max, 10) + " at theta=" + num(sp.theta_at_f_max, 3));
  const auto& p1 = sp.points[at1];
  o.check(std::abs(p1.f - p1.alpha) < 1e-6, "|f(a(1))-a(1)|=" + num(std::abs(p1.f - p1.alpha), 3));
  auto w = estimate_walk(f.f2, f.m2, f.g_m2, 2000, 400, 1);
  const double rel = std::abs(p1.alpha - w.dimension.value) / w.dimension.value;
  o.check(rel < 0.03, "a(1)=" + num(p1.alpha, 5) + " h/l=" + num(w.dimension.value, 5) + " rel=" + num(rel, 3));
}

// 5. direct sphere sums against the operator pressure
void c5(Outcome& o) {
  auto& f = fx();
  for (auto [name, g, s] : {std::tuple{"uniform", &f.g_uniform, &f.s_uniform}, std::tuple{"M2", &f.g_m2, &f.s_m2}}) {
    std::vector<std::vector<double>> logs;
    for (std::size_t n = 0; n <= 12; ++n) logs.push_back(n < 4 ? std::vector<double>{} : sphere_log_green(f.f2, *g, n));
    std::ostringstream gaps;
    double worst_gap = 0, worst_spread = 0;
    for (double th : {0.0, 0.5, 1.0, 2.0}) {
      const double b = pressure(*s, th).beta;
      const double gap = std::abs(beta_direct_from_logs(logs[12], 12, th).value - b);
      worst_gap = std::max(worst_gap, gap);
      gaps << (gaps.tellp() > 0 ? "," : "") << num(gap, 3);
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t n = 4; n <= 12; ++n) {
        const double l = beta_direct_from_logs(logs[n], n, th).log_normalized(b);
        lo = std::min(lo, l);
        hi = std::max(hi, l);
      }
      worst_spread = std::max(worst_spread, hi - lo);
    }
    o.check(worst_gap < 0.03, std::string(name) + " |direct-pressure| at t=0,.5,1,2: " + gaps.str());
    o.check(worst_spread < 1.0, std::string(name) + " normalized log-spread n=4..12: " + num(worst_spread, 3));
  }
}

// 6. Gibbs property of harmonic and sphere-weighted measures
void c6(Outcome& o) {
  auto& f = fx();
  auto apexes = sample_apexes(f.f2, 8, 200, 1);
  auto h = harmonic_gibbs_report(f.f2, f.uniform, f.g_uniform, apexes, "exact-tree", gibbs_bound("exact-tree"));
  o.check(h.pass, "harmonic exact-tree spread=" + num(h.spread, 3) + " (bound " + num(h.bound) + ")");
  for (double th : {0.0, 1.0}) {
    const double b = pressure(f.s_uniform, th).beta;
    auto r = gibbs_ratio_report(f.f2, f.g_uniform, th, b, apexes, 10, 0.0, gibbs_bound("sphere-weighted"));
    o.check(r.pass, "mu_theta(" + num(th) + ") spread=" + num(r.spread, 3) + " (bound " + num(r.bound) + ")");
  }
}

// 7. stationarity of the exact harmonic measure; counting measure as control
void c7(Outcome& o) {
  auto& f = fx();
  for (auto [name, m, mu] : {std::tuple{"F2 M2", &f.f2, &f.m2}, std::tuple{"F2 uniform", &f.f2, &f.uniform},
                             std::tuple{"Z2*Z3", &f.z2z3, &f.z_uniform}}) {
    auto r = stationarity_residual(*m, harmonic_table_exact(*m, *mu, 6), *mu);
    o.check(r.residual < 1e-10, std::string(name) + " harmonic residual=" + num(r.residual, 3));
  }
  auto counting = mutheta_table(f.f2, f.g_m2, 0.0, 5, 10);
  auto r = stationarity_residual(f.f2, counting, f.m2);
  o.check(r.residual > 1e-2, "counting under M2 residual=" + num(r.residual, 4));
}

// 8. covering numbers of the annulus hitting distribution
void c8(Outcome& o) {
  auto& f = fx();
  auto recs = hitting_experiment(f.f2, f.uniform, 10, 100000, {0.25, 0.5, 0.75}, 1, kLog3);
  const auto& r = recs.back();
  for (std::size_t i = 0; i < r.a.size(); ++i)
    o.check(std::abs(r.exponent[i] - kLog3) < 0.1,
            "a=" + num(r.a[i]) + " K=" + std::to_string(r.k[i]) + " exponent=" + num(r.exponent[i], 4));
  o.detail << "; distinct points " << r.distinct() << " of |S_10|=" << 4 * static_cast<long>(std::pow(3, 9));
}

// 9. confinement sets grow at rate h/l
void c9(Outcome& o) {
  auto& f = fx();
  const double v = growth_rate(f.aut_f2);
  {
    auto w = estimate_walk(f.f2, f.m2, f.g_m2, 2000, 400, 1);
    const double target = w.dimension.value;
    auto r = confinement_experiment(f.f2, f.m2, solve_tree_first_passage(f.f2, f.m2), target, v, ConfinementOptions{});
    o.check(std::abs(r.exponent - target) <= 0.1 * target,
            "M2 exponent=" + num(r.exponent, 5) + " h/l=" + num(target, 5) + " c=" + num(r.c, 4) +
                " coverage=" + num(r.coverage, 3));
    o.check(r.exponent < v - 0.05, "M2 exponent below v-0.05=" + num(v - 0.05, 5));
  }
  {
    auto w = estimate_walk(f.f2, f.uniform, f.g_uniform, 2000, 400, 1);
    auto r = confinement_experiment(f.f2, f.uniform, solve_tree_first_passage(f.f2, f.uniform), w.dimension.value, v,
                                    ConfinementOptions{});
    o.check(std::abs(r.exponent - v) < 0.05, "uniform control exponent=" + num(r.exponent, 5) + " v=" + num(v, 5));
  }
}

// 10. automaton validation, semisimplicity and injected defects
void c10(Outcome& o) {
  auto& f = fx();
  o.check(validate(f.aut_f2, f.f2, 10).pass, "F2 automaton depth 10");
  o.check(validate(f.aut_z, f.z2z3, 10).pass, "Z2*Z3 automaton depth 10");
  bool semi = true;
  for (const auto* s : {&f.s_uniform, &f.s_m2, &f.s_z})
    for (double th : {-1.0, 0.0, 0.5, 1.0, 2.0}) semi = semi && semisimplicity_check(*s, th).pass;
  o.check(semi, "semisimplicity at -1,0,.5,1,2");

  auto edges = f.aut_f2.edges();
  edges.pop_back();
  bool missing_caught;
  try {
    missing_caught = !validate(Automaton(f.aut_f2.num_states(), f.aut_f2.initial(), edges, f.f2), f.f2, 4).pass;
  } catch (const ModelError&) {
    missing_caught = true;
  }
  o.check(missing_caught, "dropped-edge automaton rejected");
  std::istringstream loose("states 2\ninitial 0\n0 a 1\n0 A 1\n0 b 1\n0 B 1\n1 a 1\n1 A 1\n1 b 1\n1 B 1\n");
  o.check(!validate(Automaton::parse(loose, f.f2), f.f2, 3).pass, "non-geodesic automaton rejected");
  std::istringstream chain("states 3\ninitial 0\n0 a 1\n1 a 1\n1 b 2\n2 b 2\n");
  auto chained = PotentialScheme::from_edge_weights(Automaton::parse(chain, f.f2), {0.5, 0.5, 0.5, 0.5});
  o.check(!semisimplicity_check(chained, 1.0).pass, "chained maximal components rejected");
}

// 11. byte-identical reruns, including across worker counts
void c11(Outcome& o) {
  ExperimentConfig cfg;
  cfg.steps = "M2";
  cfg.walk_steps = 400;
  cfg.replicas = 60;
  cfg.sphere_depth = 9;
  cfg.apex_max_length = 6;
  cfg.apex_count = 60;
  cfg.localdim_depth = 60;
  cfg.localdim_walks = 20;
  cfg.hitting_n = 7;
  cfg.hitting_walks = 20000;
  cfg.confine_n = 9;
  cfg.confine_walks = 200;
  const auto base = std::filesystem::path("acceptance_out");
  std::filesystem::remove_all(base);
  set_worker_count(1);
  auto a = run_pipeline(cfg, (base / "run1").string());
  set_worker_count(4);
  auto b = run_pipeline(cfg, (base / "run2").string());
  set_worker_count(0);
  o.check(a.ok() && b.ok(), "both runs complete");
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  std::size_t files = 0, differ = 0;
  for (const auto& e : std::filesystem::directory_iterator(base / "run1")) {
    const auto ext = e.path().extension();
    if (ext != ".csv" && ext != ".json" && ext != ".txt") continue;
    ++files;
    const auto other = base / "run2" / e.path().filename();
    if (e.path().filename() == "config.json" || e.path().filename() == "manifest.txt") {
      // embed the output directory
      continue;
    }
    if (!std::filesystem::exists(other) || read(e.path()) != read(other)) ++differ;
  }
  o.check(files > 10 && differ == 0, std::to_string(files) + " artifacts compared, " + std::to_string(differ) + " differ");
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Outcome&)> run;
    // wall-time limit in seconds; 0 = none
    double limit;
  };
  const std::vector<Criterion> criteria{
      {"green closed forms and Monte Carlo", c1, 10},
      {"pressure identities", c2, 5},
      {"affine pressure / equality case", c3, 120},
      {"strict convexity / dimension consistency", c4, 300},
      {"direct sums vs operator pressure", c5, 120},
      {"Gibbs property", c6, 120},
      {"stationarity", c7, 0},
      {"hitting covering numbers", c8, 180},
      {"confinement growth", c9, 600},
      {"automaton validation and semisimplicity", c10, 0},
      {"determinism", c11, 0},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].run(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (criteria[i].limit > 0) o.check(secs < criteria[i].limit, "runtime limit " + num(criteria[i].limit) + "s");
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].name << " (" << std::fixed
              << std::setprecision(1) << secs << "s) " << std::defaultfloat << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
