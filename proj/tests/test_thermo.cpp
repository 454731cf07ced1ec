#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "hyperwalk/thermo.hpp"

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

PotentialScheme tree_scheme(const GroupModel& m, const StepDistribution& mu) {
  static std::vector<std::unique_ptr<TreeGreen>> keep;
  keep.push_back(std::make_unique<TreeGreen>(m, mu));
  return build_potential(Automaton::builtin(m), m, *keep.back(), 1);
}

// Perron value of the 4x4 non-backtracking matrix with entries F(s)^theta,
// via a general eigensolver.
double eigen_pressure(const FirstPassageTable& t, const GroupModel& m, double theta) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  for (Letter x = 0; x < 4; ++x)
    for (Letter y = 0; y < 4; ++y)
      if (y != m.inverse(x)) a(x, y) = std::pow(t.letter[y], theta);
  Eigen::EigenSolver<Eigen::MatrixXd> es(a);
  double best = 0;
  for (Eigen::Index i = 0; i < 4; ++i) best = std::max(best, es.eigenvalues()[i].real());
  return std::log(best);
}

}  // namespace

TEST(Potential, UniformWeightsAreOneThird) {
  auto s = tree_scheme(f2(), StepDistribution::uniform(f2()));
  EXPECT_EQ(s.mode(), "exact-tree");
  for (const auto& a : s.arcs()) EXPECT_NEAR(std::exp(a.log_weight), 1.0 / 3.0, 1e-14);
}

TEST(Potential, BiasedWeightsAreFirstPassage) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  TreeGreen g(m, mu);
  auto aut = Automaton::builtin(m);
  auto s = build_potential(aut, m, g, 1);
  ASSERT_EQ(s.arcs().size(), aut.edges().size());
  for (std::size_t i = 0; i < aut.edges().size(); ++i)
    EXPECT_NEAR(std::exp(s.arcs()[i].log_weight), g.table().letter[aut.edges()[i].label], 1e-14);
  EXPECT_THROW(build_potential(aut, m, g, 0), PreconditionError);
}

TEST(Potential, DepthIndependentOnTrees) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  TreeGreen g(m, mu);
  auto aut = Automaton::builtin(m);
  const double b1 = pressure(build_potential(aut, m, g, 1), 0.7).beta;
  for (std::size_t k = 2; k <= 4; ++k) EXPECT_NEAR(pressure(build_potential(aut, m, g, k), 0.7).beta, b1, 1e-12);
}

TEST(Potential, GreenUnavailablePropagates) {
  const auto& m = f2();
  StepDistribution far(m, {{m.element("a"), 0.2, ""}, {m.element("A"), 0.2, ""}, {m.element("b"), 0.2, ""},
                           {m.element("B"), 0.2, ""}, {m.element("ab"), 0.2, ""}});
  auto ball = solve_ball_green(m, far, 2);
  EXPECT_THROW(build_potential(Automaton::builtin(m), m, ball, 3), GreenUnavailable);
}

TEST(Pressure, UniformF2Affine) {
  auto s = tree_scheme(f2(), StepDistribution::uniform(f2()));
  for (double th : make_grid(-2, 2, 0.25)) EXPECT_NEAR(pressure(s, th).beta, (1 - th) * std::log(3.0), 1e-10) << th;
}

TEST(Pressure, IdentitiesAtZeroAndOne) {
  for (const char* name : {"F2", "Z2*Z3", "F3", "Z*Z2"}) {
    auto m = GroupModel::builtin(name);
    auto s = tree_scheme(m, StepDistribution::uniform(m));
    EXPECT_NEAR(pressure(s, 0).beta, growth_rate(Automaton::builtin(m)), 1e-12) << name;
    EXPECT_NEAR(pressure(s, 1).beta, 0.0, 1e-10) << name;
  }
  auto s = tree_scheme(f2(), StepDistribution::builtin(f2(), "M2"));
  EXPECT_NEAR(pressure(s, 0).beta, std::log(3.0), 1e-12);
  EXPECT_NEAR(pressure(s, 1).beta, 0.0, 1e-10);
  auto sz = tree_scheme(z2z3(), StepDistribution::uniform(z2z3()));
  EXPECT_NEAR(pressure(sz, 0).beta, 0.5 * std::log(2.0), 1e-10);
}

TEST(Pressure, MatchesDenseEigensolver) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  auto t = solve_tree_first_passage(m, mu);
  auto s = tree_scheme(m, mu);
  for (double th : {-3.0, -1.0, 0.3, 1.7, 4.0}) EXPECT_NEAR(pressure(s, th).beta, eigen_pressure(t, m, th), 1e-11);
}

TEST(Pressure, GrowthBracketsAtLargeTheta) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  auto t = solve_tree_first_passage(m, mu);
  auto s = tree_scheme(m, mu);
  const double fmin = *std::min_element(t.letter.begin(), t.letter.end());
  const double fmax = *std::max_element(t.letter.begin(), t.letter.end());
  const double v = std::log(3.0);
  const double b4 = pressure(s, 4).beta, bm4 = pressure(s, -4).beta;
  EXPECT_LE(b4, v + 4 * std::log(fmax));
  EXPECT_GE(b4, v + 4 * std::log(fmin) - 1e-12);
  EXPECT_LE(bm4, v - 4 * std::log(fmin));
  EXPECT_GE(bm4, v - 4 * std::log(fmax));
  EXPECT_LT(b4, 0);
  EXPECT_GT(bm4, v);
}

TEST(BetaDirect, ClosedForms) {
  const auto& m = f2();
  TreeGreen g(m, StepDistribution::uniform(m));
  EXPECT_NEAR(beta_direct(m, g, 1, 10).value, std::log(2.0) / 10, 1e-12);
  EXPECT_NEAR(beta_direct(m, g, 0, 12).value, std::log(4 * std::pow(3.0, 11)) / 12, 1e-12);
  EXPECT_NEAR(beta_direct(m, g, 2, 12).value, std::log(2.25 * 4 * std::pow(3.0, 11) * std::pow(9.0, -12)) / 12, 1e-12);
  EXPECT_NEAR(beta_direct(m, g, 2, 12).value, -std::log(3.0), 0.1);
  EXPECT_THROW(beta_direct(m, g, 1, 12, Budget{1000}), BudgetExceeded);
}

TEST(BetaDirect, NormalizedSumsBounded) {
  const auto& m = f2();
  auto mu = StepDistribution::builtin(m, "M2");
  TreeGreen g(m, mu);
  auto s = build_potential(Automaton::builtin(m), m, g, 1);
  for (double th : {0.0, 0.5, 1.0, 2.0}) {
    const double b = pressure(s, th).beta;
    double lo = 1e300, hi = -1e300;
    for (std::size_t n = 4; n <= 12; ++n) {
      const double l = beta_direct(m, g, th, n).log_normalized(b);
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
    EXPECT_LT(hi - lo, 1.0) << th;
    // the direct average approaches the pressure like C/n
    EXPECT_NEAR(beta_direct(m, g, th, 12).value - b, hi / 12, 0.01);
  }
}

TEST(Curve, UniformSlopeConstant) {
  auto s = tree_scheme(f2(), StepDistribution::uniform(f2()));
  auto c = beta_curve(s, make_grid(-2, 2, 0.05));
  EXPECT_EQ(c.theta.size(), 81u);
  for (std::size_t i = 0; i < c.theta.size(); ++i) {
    EXPECT_NEAR(c.beta[i], (1 - c.theta[i]) * std::log(3.0), 1e-9);
    EXPECT_NEAR(c.derivative[i], -std::log(3.0), 1e-9);
  }
  EXPECT_TRUE(c.convex);
  EXPECT_TRUE(c.candidate_kinks.empty());
}

TEST(Curve, BiasedStrictlyConvex) {
  auto s = tree_scheme(f2(), StepDistribution::builtin(f2(), "M2"));
  auto c = beta_curve(s, make_grid(-1, 2, 0.05));
  EXPECT_TRUE(c.convex);
  double best = 0;
  for (std::size_t i = 0; i < c.theta.size(); ++i)
    if (c.theta[i] > -1e-12 && c.theta[i] < 1 + 1e-12) best = std::max(best, c.curvature[i]);
  EXPECT_GT(best, 1e-3);
  // chord condition on grid triples
  for (std::size_t i = 0; i < c.theta.size(); i += 7)
    for (std::size_t j = i + 2; j < c.theta.size(); j += 5)
      for (std::size_t m = i + 1; m < j; ++m) {
        const double t = (c.theta[m] - c.theta[i]) / (c.theta[j] - c.theta[i]);
        EXPECT_GE((1 - t) * c.beta[i] + t * c.beta[j], c.beta[m] - 1e-9);
      }
}

TEST(Curve, GridRefinementInvariant) {
  auto s = tree_scheme(f2(), StepDistribution::builtin(f2(), "M2"));
  auto a = beta_curve(s, make_grid(0, 1, 0.1)), b = beta_curve(s, make_grid(0, 1, 0.05));
  for (std::size_t i = 0; i < a.theta.size(); ++i) EXPECT_NEAR(a.beta[i], b.beta[2 * i], 1e-9);
}

TEST(Curve, BadGrids) {
  auto s = tree_scheme(f2(), StepDistribution::uniform(f2()));
  EXPECT_THROW(beta_curve(s, {}), PreconditionError);
  EXPECT_THROW(beta_curve(s, {0.5, 0.2}), PreconditionError);
  EXPECT_THROW(make_grid(1, 0, 0.1), PreconditionError);
}

TEST(Semisimple, SingleComponentModelsPass) {
  auto s = tree_scheme(f2(), StepDistribution::uniform(f2()));
  for (double th : {-1.0, 0.0, 0.5, 1.0, 2.0}) EXPECT_TRUE(semisimplicity_check(s, th).pass);
  auto sz = tree_scheme(z2z3(), StepDistribution::uniform(z2z3()));
  for (double th : {0.0, 0.5, 1.0}) {
    auto r = semisimplicity_check(sz, th);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.maximal.size(), 1u);
  }
}

TEST(Semisimple, ChainedEqualComponentsFail) {
  std::istringstream in("states 3\ninitial 0\n0 a 1\n1 a 1\n1 b 2\n2 b 2\n");
  auto aut = Automaton::parse(in, f2());
  auto s = PotentialScheme::from_edge_weights(aut, {0.5, 0.5, 0.5, 0.5});
  auto r = semisimplicity_check(s, 1.0);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.maximal.size(), 2u);
  ASSERT_TRUE(r.offending.has_value());
  // unequal loops: only one maximal component
  auto s2 = PotentialScheme::from_edge_weights(aut, {0.5, 0.5, 0.5, 0.25});
  EXPECT_TRUE(semisimplicity_check(s2, 1.0).pass);
}

TEST(Legendre, UniformCollapses) {
  auto s = tree_scheme(f2(), StepDistribution::uniform(f2()));
  auto sp = legendre(beta_curve(s, make_grid(-2, 2, 0.05)));
  EXPECT_LT(sp.alpha_max - sp.alpha_min, 1e-6);
  for (const auto& p : sp.points) {
    EXPECT_NEAR(p.alpha, std::log(3.0), 1e-9);
    EXPECT_NEAR(p.f, std::log(3.0), 1e-9);
  }
  EXPECT_TRUE(sp.extrapolated);
}

TEST(Legendre, BiasedIdentities) {
  auto s = tree_scheme(f2(), StepDistribution::builtin(f2(), "M2"));
  auto c = beta_curve(s, make_grid(-2, 3, 0.05));
  auto sp = legendre(c);
  EXPECT_NEAR(sp.f_max, std::log(3.0), 1e-6);
  EXPECT_NEAR(sp.theta_at_f_max, 0.0, 1e-12);
  const auto& one = sp.points[60];
  ASSERT_NEAR(one.theta, 1.0, 1e-12);
  EXPECT_NEAR(one.f, one.alpha, 1e-6);
  EXPECT_LT(sp.alpha_min, sp.alpha_max);
  // f concave in alpha: slopes of successive chords increase with theta
  for (std::size_t i = 1; i + 1 < sp.points.size(); ++i) {
    const auto &a = sp.points[i - 1], &b = sp.points[i], &d = sp.points[i + 1];
    const double s1 = (b.f - a.f) / (b.alpha - a.alpha), s2 = (d.f - b.f) / (d.alpha - b.alpha);
    EXPECT_LE(s1, s2 + 1e-6);
  }
}

TEST(Legendre, RejectsNonConvex) {
  PressureCurve c;
  c.theta = {0, 1, 2};
  c.beta = {0, 1, 0};
  c.derivative = {1, 0, -1};
  c.curvature = {0, -2, 0};
  c.min_curvature = -2;
  c.convex = false;
  EXPECT_THROW(legendre(c), PreconditionError);
}

TEST(Generic, DepthConvergenceReported) {
  const auto& m = f2();
  StepDistribution mu(m, {{m.element("a"), 0.2, ""}, {m.element("A"), 0.2, ""}, {m.element("b"), 0.2, ""},
                          {m.element("B"), 0.2, ""}, {m.element("ab"), 0.2, ""}});
  auto ball = solve_ball_green(m, mu, 8);
  auto aut = Automaton::builtin(m);
  auto s = build_potential(aut, m, ball, 3);
  EXPECT_EQ(s.mode(), "empirical");
  EXPECT_NEAR(pressure(s, 0).beta, std::log(3.0), 1e-12);
  EXPECT_LT(depth_convergence(aut, m, ball, 3, {0.0, 0.5, 1.0}), 1e-2);
}
