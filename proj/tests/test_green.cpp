#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hyperwalk/green.hpp"

using namespace hyperwalk;

namespace {

const GroupModel& f2() {
  static const GroupModel m = GroupModel::builtin("F2");
  return m;
}
const GroupModel& z2z3() {
  static const GroupModel m = GroupModel::builtin("Z2*Z3");
  return m;
}

}  // namespace

TEST(StepDistribution, Validation) {
  const auto& m = f2();
  EXPECT_THROW(StepDistribution(m, {{m.element("a"), 1.0, ""}}), AdmissibilityError);
  EXPECT_THROW(StepDistribution(m, {{m.element("a"), 0.5, ""}, {m.element("A"), 0.5, ""}}),
               AdmissibilityError);
  EXPECT_THROW(StepDistribution(m, {{m.element("a"), 0.5, ""}, {m.element("A"), 0.4, ""},
                                    {m.element("b"), 0.05, ""}, {m.element("B"), 0.05, ""},
                                    {m.element("ab"), 0.01, ""}}),
               AdmissibilityError);
  EXPECT_THROW(StepDistribution(m, {{m.element("a"), 0.5, ""}, {m.element("a"), 0.5, ""}}),
               AdmissibilityError);
  // positive semigroup generated by a, b, (ab)^-1 is all of F2
  EXPECT_NO_THROW(StepDistribution(
      m, {{m.element("a"), 0.3, ""}, {m.element("b"), 0.3, ""}, {m.element("BA"), 0.4, ""}}));
}

TEST(StepDistribution, ParseFractions) {
  const auto& m = f2();
  std::istringstream in("a 1/4\nA 0.25 # comment\nb 1/4\nB 1/4\n");
  auto mu = StepDistribution::parse(in, m);
  EXPECT_EQ(mu.size(), 4u);
  EXPECT_DOUBLE_EQ(mu.mass(m.element("A")), 0.25);
  std::istringstream bad("a 1/4\nA x\n");
  try {
    StepDistribution::parse(bad, m, "bad.steps");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(FirstPassage, UniformF2) {
  auto mu = StepDistribution::uniform(f2());
  auto t = solve_tree_first_passage(f2(), mu);
  for (double v : t.letter) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(t.green_identity, 1.5, 1e-12);
  EXPECT_LT(t.residual, 1e-12);
}

TEST(FirstPassage, BiasedM2DistinctAndConsistent) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  auto t = solve_tree_first_passage(m, mu);
  for (double v : t.letter) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_GT(std::abs(t.letter[i] - t.letter[j]), 1e-3);
  // each F_s solves F_s = mu(s) + sum_{u != s} mu(u) F_{u^-1} F_s
  for (Letter s = 0; s < 4; ++s) {
    double rhs = mu.mass(m.reduce({s}));
    for (Letter u = 0; u < 4; ++u)
      if (u != s) rhs += mu.mass(m.reduce({u})) * t.letter[m.inverse(u)] * t.letter[s];
    EXPECT_NEAR(rhs, t.letter[s], 1e-13);
  }
  // independent oracle: tree recursion with a large absorbing ball
  TreeGreen g(t);
  for (const char* w : {"a", "A", "b", "B", "ab", "BBa"}) {
    auto x = m.element(w);
    const double gh = tree_ball_green(m, mu, x, 80);
    EXPECT_NEAR(gh / g.green(x), 1.0, 1e-10) << w;
  }
}

TEST(FirstPassage, Z2Z3Uniform) {
  const auto& g = z2z3();
  auto t = solve_tree_first_passage(g, StepDistribution::uniform(g));
  EXPECT_NEAR(t.letter[*g.letter("s")], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(t.letter[*g.letter("t")], 0.75, 1e-12);
  EXPECT_NEAR(t.letter[*g.letter("T")], 0.75, 1e-12);
}

TEST(FirstPassage, Preconditions) {
  const auto& m = f2();
  StepDistribution far(m, {{m.element("a"), 0.2, ""}, {m.element("A"), 0.2, ""}, {m.element("b"), 0.2, ""},
                           {m.element("B"), 0.2, ""}, {m.element("ab"), 0.2, ""}});
  EXPECT_THROW(solve_tree_first_passage(m, far), PreconditionError);
  auto z33 = GroupModel::builtin("Z4*Z2");
  EXPECT_THROW(solve_tree_first_passage(z33, StepDistribution::uniform(z33)), PreconditionError);
}

TEST(GreenValue, ProductFormula) {
  TreeGreen g(f2(), StepDistribution::uniform(f2()));
  EXPECT_NEAR(g.green_identity(), 1.5, 1e-12);
  EXPECT_NEAR(g.green(f2().element("ab")), 1.0 / 6.0, 1e-12);
  EXPECT_GE(g.green_identity(), 1.0);
  // the ball solver is an independent oracle
  auto ball = solve_ball_green(f2(), StepDistribution::uniform(f2()), 9);
  EXPECT_NEAR(ball.green(f2().element("ab")), 1.0 / 6.0, 2e-3);
  EXPECT_LE(ball.green(f2().element("ab")), 1.0 / 6.0);
}

TEST(GreenValue, AnconaExactOnTrees) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  TreeGreen g(m, mu);
  auto x = m.element("abAAb");
  for (const auto& z : m.geodesic_prefixes(x)) {
    const double gzx = g.green(m.multiply(m.inverse(z), x));
    EXPECT_NEAR(g.green(x) * g.green_identity(), g.green(z) * gzx, 1e-14);
  }
}

TEST(GreenValue, HarnackAndDecay) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  TreeGreen g(m, mu);
  double fmin = 1, fmax = 0;
  for (double v : g.table().letter) fmin = std::min(fmin, v), fmax = std::max(fmax, v);
  const double lambda = -std::log(fmax);
  for (const auto& sphere : ball_enumerate(m, 5))
    for (const auto& z : sphere) {
      EXPECT_LE(std::log(g.green(z)) + lambda * z.length(), std::log(g.green_identity()) + 1e-12);
      for (Letter s = 0; s < 4; ++s) {
        auto z2 = m.multiply(z, m.reduce({s}));
        EXPECT_LE(g.green(z) / g.green(z2), 1.0 / fmin + 1e-12);
      }
    }
}

TEST(Truncated, ConvergesToExact) {
  const auto& m = f2();
  auto mu = StepDistribution::uniform(m);
  auto r = truncated_green(m, mu, m.identity(), 20);
  EXPECT_NEAR(r.lower, 1.5, 1e-6);
  EXPECT_LE(r.lower, 1.5);
  EXPECT_NEAR(r.estimate, 1.5, 1e-8);
  auto x = m.element("abb");
  auto rx = truncated_green(m, mu, x, x.length() + 20);
  EXPECT_NEAR(rx.lower, 1.5 / 27.0, 1e-6);
  EXPECT_THROW(truncated_green(m, mu, x, x.length()), PreconditionError);
}

TEST(Truncated, TreeRecursionMatchesBallSolver) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  auto ball = solve_ball_green(m, mu, 7);
  for (const char* w : {"1", "a", "B", "ab", "AbA"}) {
    auto x = m.element(w);
    EXPECT_NEAR(ball.green(x), tree_ball_green(m, mu, x, 7), 1e-12) << w;
  }
}

TEST(Truncated, MonotoneInHorizonOnZ2Z3) {
  const auto& g = z2z3();
  auto mu = StepDistribution::uniform(g);
  auto x = g.element("st");
  double prev = 0;
  for (std::size_t h : {3u, 6u, 10u, 15u, 25u}) {
    auto r = truncated_green(g, mu, x, h);
    EXPECT_GE(r.lower, prev);
    prev = r.lower;
  }
  TreeGreen exact(g, mu);
  EXPECT_LE(prev, exact.green(x) + 1e-12);
  EXPECT_NEAR(prev, exact.green(x), 1e-3);
  // horizon extrapolation closes most of the remaining gap
  auto r = truncated_green(g, mu, x, 25);
  EXPECT_LT(std::abs(r.estimate - exact.green(x)), 0.1 * std::abs(r.lower - exact.green(x)));
}

TEST(MonteCarlo, Identity) {
  auto r = mc_first_passage(f2(), StepDistribution::uniform(f2()), f2().identity(), 10, 5, 1);
  EXPECT_EQ(r.estimate, 1.0);
}

TEST(MonteCarlo, UniformF2) {
  auto r = mc_first_passage(f2(), StepDistribution::uniform(f2()), f2().element("a"), 100000, 30, 42);
  EXPECT_NEAR(r.estimate, 1.0 / 3.0, 3 * r.half_width);
  EXPECT_GT(r.half_width, 0.0);
}

TEST(MonteCarlo, BiasedMatchesSolver) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  auto t = solve_tree_first_passage(m, mu);
  for (const char* w : {"a", "A", "b", "B"}) {
    auto x = m.element(w);
    auto r = mc_first_passage(m, mu, x, 100000, 30, 7);
    EXPECT_NEAR(r.estimate, t.letter[x.word()[0]], 3 * r.half_width) << w;
  }
}

TEST(MonteCarlo, DeterministicAcrossWorkerCounts) {
  const auto& m = f2();
  auto mu = StepDistribution::uniform(m);
  set_worker_count(1);
  auto a = mc_first_passage(m, mu, m.element("ab"), 20000, 20, 99);
  set_worker_count(4);
  auto b = mc_first_passage(m, mu, m.element("ab"), 20000, 20, 99);
  set_worker_count(0);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.censored, b.censored);
}

TEST(Martin, Examples) {
  const auto& m = f2();
  TreeGreen g(m, StepDistribution::uniform(m));
  auto ray_a = m.geodesic_prefixes(m.element("abababab"));
  auto ray_b = m.geodesic_prefixes(m.element("babababa"));
  for (std::size_t k = 0; k < ray_a.size(); ++k)
    EXPECT_NEAR(martin_kernel_approx(m, g, m.identity(), ray_a, k), 1.0, 1e-14);
  EXPECT_NEAR(martin_kernel_approx(m, g, m.element("a"), ray_a, 4), 3.0, 1e-12);
  EXPECT_NEAR(martin_kernel_approx(m, g, m.element("a"), ray_b, 4), 1.0 / 3.0, 1e-12);
  EXPECT_THROW(martin_kernel_approx(m, g, m.element("a"), ray_b, 9), PreconditionError);
  // via truncated values too
  auto ball = solve_ball_green(m, StepDistribution::uniform(m), 9);
  EXPECT_NEAR(martin_kernel_approx(m, ball, m.element("a"), ray_b, 3), 1.0 / 3.0, 1e-2);
}

TEST(Cache, RoundTrip) {
  const auto& m = z2z3();
  auto ball = solve_ball_green(m, StepDistribution::uniform(m), 6);
  const std::string path = ::testing::TempDir() + "green_cache.bin";
  save_green_cache(path, m.alphabet_size(), ball.values());
  auto back = load_green_cache(path, m.alphabet_size());
  EXPECT_EQ(back, ball.values());
  EXPECT_THROW(load_green_cache(path, 4), Error);
  std::remove(path.c_str());
}

TEST(MakeGreen, PicksBackend) {
  auto a = make_green(f2(), StepDistribution::uniform(f2()), 6);
  EXPECT_EQ(a->method(), "exact-tree");
  const auto& m = f2();
  StepDistribution far(m, {{m.element("a"), 0.2, ""}, {m.element("A"), 0.2, ""}, {m.element("b"), 0.2, ""},
                           {m.element("B"), 0.2, ""}, {m.element("ab"), 0.2, ""}});
  auto b = make_green(m, far, 5);
  EXPECT_EQ(b->method(), "truncated-ball");
  EXPECT_THROW(b->green(m.element("aaaaaa")), GreenUnavailable);
}
