#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "common.hpp"

namespace hyperwalk {

struct PerronResult {
  double value = 0.0;
  // Collatz-Wielandt bracket: lower <= value <= upper.
  double lower = 0.0;
  double upper = 0.0;
  long iterations = 0;
  Eigen::VectorXd vector;
};

// Perron root of an irreducible nonnegative square matrix by power iteration
// on M + c I (c = mean row sum), which is primitive even when M is periodic.
// Stops once the Collatz-Wielandt bounds agree to `rel_tol`.
inline PerronResult perron_root(const Eigen::MatrixXd& m, double rel_tol = 1e-13,
                                long max_iterations = 1'000'000) {
  PerronResult r;
  const Eigen::Index n = m.rows();
  if (n == 0) return r;
  const double scale = m.maxCoeff();
  if (scale <= 0.0) {
    r.vector = Eigen::VectorXd::Ones(n);
    return r;
  }
  const Eigen::MatrixXd a = m / scale;
  const double shift = a.rowwise().sum().mean();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  double lo = 0, hi = 0;
  for (long it = 1; it <= max_iterations; ++it) {
    Eigen::VectorXd ax = a * x;
    lo = std::numeric_limits<double>::infinity();
    hi = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double q = ax[i] / x[i];
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    r.iterations = it;
    if (hi - lo <= rel_tol * hi) break;
    if (it == max_iterations)
      throw ConvergenceError("Perron power iteration did not converge in " +
                             std::to_string(max_iterations) + " iterations");
    x = ax + shift * x;
    x /= x.maxCoeff();
  }
  r.lower = lo * scale;
  r.upper = hi * scale;
  r.value = 0.5 * (lo + hi) * scale;
  r.vector = x / x.sum();
  return r;
}

}  // namespace hyperwalk
