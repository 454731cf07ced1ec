#pragma once

// Transfer operators on automaton cylinders: the Green potential, per-SCC
// pressures, the pressure curve beta(theta) (by transfer operator and by
// direct sphere sums), semisimplicity, and the Legendre spectrum.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "automaton.hpp"
#include "common.hpp"
#include "green.hpp"
#include "group_model.hpp"
#include "linalg.hpp"

namespace hyperwalk {

struct TransferArc {
  std::size_t from;
  std::size_t to;
  // log of the cylinder weight e^{phi}
  double log_weight;
};

// Weighted block graph: vertices are (k-1)-edge automaton paths, arcs are
// k-cylinders carrying the potential.
class PotentialScheme {
 public:
  PotentialScheme(std::size_t vertices, std::vector<TransferArc> arcs, std::size_t depth, std::string mode)
      : vertices_(vertices), arcs_(std::move(arcs)), depth_(depth), mode_(std::move(mode)) {
    std::vector<std::vector<std::size_t>> adj(vertices_);
    for (const auto& a : arcs_) {
      if (a.from >= vertices_ || a.to >= vertices_) throw ModelError("transfer arc endpoint out of range");
      if (!std::isfinite(a.log_weight)) throw ModelError("cylinder weights must be positive and finite");
      adj[a.from].push_back(a.to);
    }
    decomposition_ = decompose_graph(adj);
  }

  // Depth-1 scheme with an explicit weight per automaton edge (in edge order).
  static PotentialScheme from_edge_weights(const Automaton& aut, const std::vector<double>& weights) {
    if (weights.size() != aut.edges().size()) throw PreconditionError("one weight per automaton edge expected");
    std::vector<TransferArc> arcs;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0)) throw ModelError("cylinder weights must be positive");
      arcs.push_back({aut.edges()[i].from, aut.edges()[i].to, std::log(weights[i])});
    }
    return PotentialScheme(aut.num_states(), std::move(arcs), 1, "explicit");
  }

  std::size_t vertices() const noexcept { return vertices_; }
  const std::vector<TransferArc>& arcs() const noexcept { return arcs_; }
  std::size_t depth() const noexcept { return depth_; }
  const std::string& mode() const noexcept { return mode_; }
  const ComponentDecomposition& decomposition() const noexcept { return decomposition_; }

 private:
  std::size_t vertices_;
  std::vector<TransferArc> arcs_;
  std::size_t depth_;
  std::string mode_;
  ComponentDecomposition decomposition_;
};

// Potential of depth k: the cylinder c = (e_0..e_{k-1}) gets weight
// G(1, a(c)) / G(1, a(sigma c)), a = label word. On tree models with k = 1
// this is F(1, label) exactly.
inline PotentialScheme build_potential(const Automaton& aut, const GroupModel& model, const GreenFunction& green,
                                       std::size_t k, Budget budget = {}) {
  if (k == 0) throw PreconditionError("cylinder depth must be at least 1");
  if (aut.model_id() != model.id()) throw ModelError("automaton built for a different model");
  // vertex key: (state, edge sequence); the state matters only for k = 1
  std::map<std::pair<std::size_t, std::vector<std::size_t>>, std::size_t> vertex;
  auto vertex_of = [&](std::size_t state, std::vector<std::size_t> edges) {
    auto key = std::make_pair(edges.empty() ? state : aut.edges()[edges.front()].from, std::move(edges));
    auto [it, fresh] = vertex.emplace(std::move(key), vertex.size());
    return it->second;
  };
  std::vector<TransferArc> arcs;
  std::vector<std::size_t> path;
  std::size_t used = 0;
  auto label_word = [&](std::size_t from, std::size_t to) {
    Word w;
    for (std::size_t i = from; i < to; ++i) w.push_back(aut.edges()[path[i]].label);
    return model.reduce(w).word();
  };
  // all k-edge paths, by depth-first extension from every state
  std::function<void(std::size_t)> extend = [&](std::size_t state) {
    if (path.size() == k) {
      budget.check(++used, "potential cylinders");
      std::vector<std::size_t> head(path.begin(), path.end() - 1), tail(path.begin() + 1, path.end());
      const std::size_t from = vertex_of(aut.edges()[path.front()].from, head);
      const std::size_t to = vertex_of(aut.edges()[path.front()].to, tail);
      double lw;
      try {
        lw = green.log_green_word(label_word(0, k)) - green.log_green_word(label_word(1, k));
      } catch (const GreenUnavailable& e) {
        throw GreenUnavailable(std::string("potential depth ") + std::to_string(k) + ": " + e.what());
      }
      arcs.push_back({from, to, lw});
      return;
    }
    for (auto ei : aut.out_edges(state)) {
      path.push_back(ei);
      extend(aut.edges()[ei].to);
      path.pop_back();
    }
  };
  for (std::size_t s = 0; s < aut.num_states(); ++s) extend(s);
  const std::string mode = green.method() == "exact-tree" ? "exact-tree" : "empirical";
  return PotentialScheme(vertex.size(), std::move(arcs), k, mode);
}

struct ComponentPressure {
  // index into the scheme's component decomposition
  std::size_t component;
  std::size_t size;
  double pressure;
};

struct PressureResult {
  double beta = -std::numeric_limits<double>::infinity();
  std::vector<ComponentPressure> components;
  // components within `tie_tol` of beta
  std::vector<std::size_t> maximal;
};

// Pr_C(theta phi) = log Perron root of the theta-weighted transfer matrix on
// each non-trivial component C; beta = max over C.
inline PressureResult pressure(const PotentialScheme& scheme, double theta, double tie_tol = 1e-9) {
  if (!std::isfinite(theta)) throw PreconditionError("theta must be finite");
  const auto& d = scheme.decomposition();
  PressureResult r;
  for (auto c : d.nontrivial()) {
    const auto& st = d.components[c].states;
    std::vector<Eigen::Index> local(scheme.vertices(), -1);
    for (std::size_t i = 0; i < st.size(); ++i) local[st[i]] = static_cast<Eigen::Index>(i);
    const auto n = static_cast<Eigen::Index>(st.size());
    // scale weights by the largest theta-weight so exp() stays finite
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& a : scheme.arcs())
      if (d.component_of[a.from] == c && d.component_of[a.to] == c) top = std::max(top, theta * a.log_weight);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (const auto& a : scheme.arcs())
      if (d.component_of[a.from] == c && d.component_of[a.to] == c)
        m(local[a.from], local[a.to]) += std::exp(theta * a.log_weight - top);
    const double pr = std::log(perron_root(m, 1e-13).value) + top;
    r.components.push_back({c, st.size(), pr});
    r.beta = std::max(r.beta, pr);
  }
  for (const auto& cp : r.components)
    if (cp.pressure >= r.beta - tie_tol) r.maximal.push_back(cp.component);
  return r;
}

// log G(1, x) for every x in S_n, in lexicographic normal-form order.
inline std::vector<double> sphere_log_green(const GroupModel& model, const GreenFunction& green, std::size_t n,
                                            Budget budget = {}) {
  std::vector<double> out;
  for_each_sphere_word(model, n, [&](const Word& w) { out.push_back(green.log_green_word(w)); }, budget);
  return out;
}

inline double log_sum_exp_scaled(const std::vector<double>& logs, double theta) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : logs) top = std::max(top, theta * l);
  if (!std::isfinite(top)) return top;
  double s = 0;
  for (double l : logs) s += std::exp(theta * l - top);
  return top + std::log(s);
}

struct DirectBeta {
  std::size_t n = 0;
  double theta = 0;
  // log sum_{x in S_n} G(1,x)^theta
  double log_sum = 0;
  // (1/n) log_sum
  double value = 0;
  // log of the normalized sum sum G^theta e^{-n beta}, given beta
  double log_normalized(double beta) const { return log_sum - static_cast<double>(n) * beta; }
};

inline DirectBeta beta_direct_from_logs(const std::vector<double>& sphere_logs, std::size_t n, double theta) {
  if (n == 0) throw PreconditionError("beta_direct needs n >= 1");
  DirectBeta d;
  d.n = n;
  d.theta = theta;
  d.log_sum = log_sum_exp_scaled(sphere_logs, theta);
  d.value = d.log_sum / static_cast<double>(n);
  return d;
}

// (1/n) log sum_{x in S_n} G(1, x)^theta by sphere enumeration.
inline DirectBeta beta_direct(const GroupModel& model, const GreenFunction& green, double theta, std::size_t n,
                              Budget budget = {}) {
  return beta_direct_from_logs(sphere_log_green(model, green, n, budget), n, theta);
}

struct PressureCurve {
  std::vector<double> theta;
  std::vector<double> beta;
  // central differences (the grid is padded by one step on each side)
  std::vector<double> derivative;
  // (beta_{i+1} - 2 beta_i + beta_{i-1}) / h^2 at interior points; 0 at ends
  std::vector<double> curvature;
  std::vector<std::vector<ComponentPressure>> components;
  std::vector<std::vector<std::size_t>> maximal;
  double min_curvature = 0;
  bool convex = true;
  // grid indices where the set of maximal components changes
  std::vector<std::size_t> candidate_kinks;
};

inline std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0) || !(hi >= lo)) throw PreconditionError("grid needs lo <= hi and step > 0");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) g[i] = lo + static_cast<double>(i) * step;
  return g;
}

inline PressureCurve beta_curve(const PotentialScheme& scheme, const std::vector<double>& grid,
                                double convexity_tol = 1e-9) {
  if (grid.empty()) throw PreconditionError("empty theta grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw PreconditionError("theta grid must be strictly increasing");
  const double h_lo = grid.size() > 1 ? grid[1] - grid[0] : 0.05;
  const double h_hi = grid.size() > 1 ? grid[grid.size() - 1] - grid[grid.size() - 2] : 0.05;
  std::vector<double> padded;
  padded.push_back(grid.front() - h_lo);
  padded.insert(padded.end(), grid.begin(), grid.end());
  padded.push_back(grid.back() + h_hi);
  std::vector<PressureResult> res(padded.size());
  parallel_tasks(padded.size(), [&](std::size_t i) { res[i] = pressure(scheme, padded[i]); });

  PressureCurve c;
  c.theta = grid;
  const std::size_t n = grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = res[i + 1];
    c.beta.push_back(r.beta);
    c.components.push_back(r.components);
    c.maximal.push_back(r.maximal);
    c.derivative.push_back((res[i + 2].beta - res[i].beta) / (padded[i + 2] - padded[i]));
    const double h1 = padded[i + 1] - padded[i], h2 = padded[i + 2] - padded[i + 1];
    const double curv =
        2.0 * ((res[i + 2].beta - r.beta) / h2 - (r.beta - res[i].beta) / h1) / (h1 + h2);
    c.curvature.push_back(curv);
    if (i > 0 && r.maximal != res[i].maximal) c.candidate_kinks.push_back(i);
  }
  c.min_curvature = *std::min_element(c.curvature.begin(), c.curvature.end());
  c.convex = c.min_curvature >= -convexity_tol;
  return c;
}

struct SemisimplicityReport {
  bool pass = true;
  double beta = 0;
  std::vector<std::size_t> maximal;
  // (from, to) maximal components joined by a path, when the check fails
  std::optional<std::pair<std::size_t, std::size_t>> offending;
};

inline SemisimplicityReport semisimplicity_check(const PotentialScheme& scheme, double theta, double tie_tol = 1e-9) {
  auto p = pressure(scheme, theta, tie_tol);
  SemisimplicityReport r;
  r.beta = p.beta;
  r.maximal = p.maximal;
  for (auto a : p.maximal)
    for (auto b : p.maximal)
      if (a != b && scheme.decomposition().reaches(a, b)) {
        r.pass = false;
        if (!r.offending) r.offending = std::make_pair(a, b);
      }
  return r;
}

struct SpectrumPoint {
  double theta;
  double alpha;
  double f;
};

struct SpectrumCurve {
  std::vector<SpectrumPoint> points;
  // grid-edge slopes; the true values are theta -> +-infinity limits
  double alpha_min = 0;
  double alpha_max = 0;
  bool extrapolated = true;
  double f_max = 0;
  double theta_at_f_max = 0;
};

// alpha = -beta', f(alpha) = theta alpha + beta(theta).
inline SpectrumCurve legendre(const PressureCurve& curve) {
  if (curve.theta.empty()) throw PreconditionError("empty pressure curve");
  if (!curve.convex)
    throw PreconditionError("pressure curve is not convex within tolerance (min curvature " +
                            std::to_string(curve.min_curvature) + ")");
  SpectrumCurve s;
  s.f_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.theta.size(); ++i) {
    const double a = -curve.derivative[i];
    const double f = curve.theta[i] * a + curve.beta[i];
    s.points.push_back({curve.theta[i], a, f});
    if (f > s.f_max) {
      s.f_max = f;
      s.theta_at_f_max = curve.theta[i];
    }
  }
  s.alpha_min = s.points.back().alpha;
  s.alpha_max = s.points.front().alpha;
  return s;
}

// Largest |pressure at depth k - pressure at depth k+1| over the given thetas;
// used to choose the cylinder depth on generic models.
inline double depth_convergence(const Automaton& aut, const GroupModel& model, const GreenFunction& green,
                                std::size_t k, const std::vector<double>& thetas) {
  auto a = build_potential(aut, model, green, k), b = build_potential(aut, model, green, k + 1);
  double worst = 0;
  for (double t : thetas) worst = std::max(worst, std::abs(pressure(a, t).beta - pressure(b, t).beta));
  return worst;
}

}  // namespace hyperwalk
