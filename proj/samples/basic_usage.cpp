// Library walkthrough on the biased walk on F2: Green function, pressure
// curve, spectrum, walk statistics and a harmonic-measure cone.

#include <iomanip>
#include <iostream>

#include "hyperwalk/boundary.hpp"
#include "hyperwalk/thermo.hpp"
#include "hyperwalk/walk_stats.hpp"

int main() {
  using namespace hyperwalk;
  const auto f2 = GroupModel::builtin("F2");
  const auto mu = StepDistribution::builtin(f2, "M2");
  const TreeGreen green(f2, mu);
  std::cout << std::setprecision(8);

  std::cout << "G(1,1) = " << green.green_identity() << '\n';
  for (const char* g : {"a", "A", "b", "B"}) std::cout << "F(1," << g << ") = " << green.first_passage(f2.element(g)) << '\n';

  const auto aut = Automaton::builtin(f2);
  std::cout << "growth v = " << growth_rate(aut) << '\n';
  const auto scheme = build_potential(aut, f2, green, 1);
  const auto curve = beta_curve(scheme, make_grid(-1, 2, 0.25));
  for (std::size_t i = 0; i < curve.theta.size(); ++i)
    std::cout << "beta(" << curve.theta[i] << ") = " << curve.beta[i] << '\n';

  const auto spectrum = legendre(curve);
  for (const auto& p : spectrum.points) std::cout << "alpha = " << p.alpha << "  f = " << p.f << '\n';

  const auto w = estimate_walk(f2, mu, green, 2000, 200, 1);
  std::cout << "drift l = " << w.drift.value << " +- " << w.drift.std_error << '\n'
            << "entropy h = " << w.entropy.value << " +- " << w.entropy.std_error << '\n'
            << "h/l = " << w.dimension.value << '\n';

  const HarmonicMeasure nu(f2, mu);
  std::cout << "nu(C(ab)) = " << nu.cone(f2.element("ab")) << '\n';
}
