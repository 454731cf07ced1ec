#pragma once

// Random-walk simulation and estimators for drift l, entropy h (Green speed
// and exact convolution) and ray tracking.

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "green.hpp"
#include "group_model.hpp"
#include "step_distribution.hpp"

namespace hyperwalk {

// x <- x * inc, kept in normal form.
inline void apply_step(const GroupModel& model, Word& x, const Word& inc) {
  if (model.is_free_product()) {
    for (Letter c : inc) model.push_letter(x, c);
  } else {
    Word v = x;
    v.insert(v.end(), inc.begin(), inc.end());
    x = model.reduce(v).word();
  }
}

struct Trajectory {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  // index into the step distribution's atoms, one per step
  std::vector<std::uint32_t> increments;
  // |x_n| for n = 0..N
  std::vector<std::uint32_t> lengths;
  Word final_position;

  std::size_t steps() const noexcept { return increments.size(); }

  // x_0 = 1, ..., x_N, replayed from the increments.
  std::vector<Element> positions(const GroupModel& model, const StepDistribution& mu) const {
    std::vector<Element> out;
    out.reserve(increments.size() + 1);
    Word x;
    out.push_back(model.identity());
    for (auto i : increments) {
      apply_step(model, x, mu.element(i).word());
      out.push_back(model.from_normal_form(x));
    }
    return out;
  }
};

inline Trajectory trajectory_from_increments(const GroupModel& model, const StepDistribution& mu,
                                             std::vector<std::uint32_t> increments) {
  if (mu.model_id() != model.id()) throw ModelError("step distribution built for a different model");
  Trajectory t;
  t.increments = std::move(increments);
  t.lengths.reserve(t.increments.size() + 1);
  t.lengths.push_back(0);
  for (auto i : t.increments) {
    if (i >= mu.size()) throw PreconditionError("increment index outside the support");
    apply_step(model, t.final_position, mu.element(i).word());
    t.lengths.push_back(static_cast<std::uint32_t>(t.final_position.size()));
  }
  return t;
}

// Reproducible given (seed, stream).
inline Trajectory simulate(const GroupModel& model, const StepDistribution& mu, std::size_t steps,
                           std::uint64_t seed, std::uint64_t stream = 0) {
  if (mu.model_id() != model.id()) throw ModelError("step distribution built for a different model");
  Rng rng = make_rng(seed, stream);
  std::vector<std::uint32_t> inc(steps);
  for (auto& i : inc) i = static_cast<std::uint32_t>(mu.sample(rng));
  Trajectory t = trajectory_from_increments(model, mu, std::move(inc));
  t.seed = seed;
  t.stream = stream;
  return t;
}

// Final position only; no per-step storage.
inline Word run_walk(const GroupModel& model, const StepDistribution& mu, std::size_t steps, Rng& rng) {
  Word x;
  for (std::size_t s = 0; s < steps; ++s) apply_step(model, x, mu.element(mu.sample(rng)).word());
  return x;
}

struct EstimateWithError {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  std::string method;
};

inline EstimateWithError mean_estimate(const std::vector<double>& xs, std::string method) {
  EstimateWithError e;
  e.method = std::move(method);
  e.samples = xs.size();
  if (xs.empty()) return e;
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  e.value = m;
  if (xs.size() > 1) {
    double v = 0;
    for (double x : xs) v += (x - m) * (x - m);
    v /= static_cast<double>(xs.size() - 1);
    e.std_error = std::sqrt(v / static_cast<double>(xs.size()));
  }
  return e;
}

// Ratio of means sum(a)/sum(b) with a linearised standard error.
inline EstimateWithError ratio_estimate(const std::vector<double>& a, const std::vector<double>& b,
                                        std::string method) {
  EstimateWithError e;
  e.method = std::move(method);
  e.samples = a.size();
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sa += a[i], sb += b[i];
  if (sb == 0) throw PreconditionError("ratio estimate with zero denominator");
  const double r = sa / sb;
  e.value = r;
  const double n = static_cast<double>(a.size());
  if (a.size() > 1) {
    double v = 0;
    for (std::size_t i = 0; i < a.size(); ++i) v += (a[i] - r * b[i]) * (a[i] - r * b[i]);
    v /= n - 1;
    e.std_error = std::sqrt(v / n) / (sb / n);
  }
  return e;
}

// Per-replica samples of |x_N|/N and -(1/N) log F(1, x_N), drawn from the
// same trajectories (replica i uses stream i).
struct WalkSamples {
  std::size_t steps = 0;
  std::vector<double> drift;
  std::vector<double> green_speed;
};

inline WalkSamples sample_walks(const GroupModel& model, const StepDistribution& mu,
                                const GreenFunction* green, std::size_t steps, std::size_t replicas,
                                std::uint64_t seed) {
  if (mu.model_id() != model.id()) throw ModelError("step distribution built for a different model");
  if (replicas == 0) throw PreconditionError("need at least one replica");
  WalkSamples s;
  s.steps = steps;
  s.drift.assign(replicas, 0.0);
  if (green) s.green_speed.assign(replicas, 0.0);
  const double n = static_cast<double>(steps);
  parallel_tasks(replicas, [&](std::size_t r) {
    Rng rng = make_rng(seed, r);
    Word x = run_walk(model, mu, steps, rng);
    if (steps == 0) return;
    s.drift[r] = static_cast<double>(x.size()) / n;
    if (green) s.green_speed[r] = -green->log_first_passage_word(x) / n;
  });
  return s;
}

inline EstimateWithError estimate_drift(const GroupModel& model, const StepDistribution& mu,
                                        std::size_t steps, std::size_t replicas, std::uint64_t seed) {
  return mean_estimate(sample_walks(model, mu, nullptr, steps, replicas, seed).drift, "drift");
}

inline EstimateWithError estimate_entropy_green_speed(const GroupModel& model, const StepDistribution& mu,
                                                      const GreenFunction& green, std::size_t steps,
                                                      std::size_t replicas, std::uint64_t seed) {
  return mean_estimate(sample_walks(model, mu, &green, steps, replicas, seed).green_speed,
                       "green-speed/" + green.method());
}

struct WalkEstimates {
  EstimateWithError drift;
  EstimateWithError entropy;
  // h/l as a ratio of means over the same replicas
  EstimateWithError dimension;
};

inline WalkEstimates estimate_walk(const GroupModel& model, const StepDistribution& mu,
                                   const GreenFunction& green, std::size_t steps, std::size_t replicas,
                                   std::uint64_t seed) {
  auto s = sample_walks(model, mu, &green, steps, replicas, seed);
  WalkEstimates w;
  w.drift = mean_estimate(s.drift, "drift");
  w.entropy = mean_estimate(s.green_speed, "green-speed/" + green.method());
  w.dimension = ratio_estimate(s.green_speed, s.drift, "green-speed/drift");
  return w;
}

struct ConvolutionEntropy {
  // H_n for n = 1..n_max
  std::vector<double> entropy;
  // H_n / n
  std::vector<double> per_step;
};

// Exact Shannon entropies of mu^{*n} by repeated convolution on the ball of
// radius reach * n_max.
inline ConvolutionEntropy estimate_entropy_convolution(const GroupModel& model, const StepDistribution& mu,
                                                       std::size_t n_max, Budget budget = {}) {
  if (mu.model_id() != model.id()) throw ModelError("step distribution built for a different model");
  ConvolutionEntropy out;
  std::unordered_map<Word, double, WordHash> cur{{Word{}, 1.0}};
  for (std::size_t n = 1; n <= n_max; ++n) {
    std::unordered_map<Word, double, WordHash> next;
    next.reserve(cur.size() * mu.size());
    for (const auto& [w, p] : cur) {
      for (const auto& a : mu.atoms()) {
        Word v = w;
        apply_step(model, v, a.element.word());
        next[std::move(v)] += p * a.probability;
        budget.check(next.size(), "convolution entropy");
      }
    }
    cur.swap(next);
    // sort masses so the sum does not depend on hash order
    std::vector<double> masses;
    masses.reserve(cur.size());
    for (const auto& kv : cur) masses.push_back(kv.second);
    std::sort(masses.begin(), masses.end());
    double h = 0;
    for (double p : masses)
      if (p > 0) h -= p * std::log(p);
    out.entropy.push_back(h);
    out.per_step.push_back(h / static_cast<double>(n));
  }
  return out;
}

struct RayTracking {
  // geodesic prefixes of x_N
  std::vector<Element> ray;
  // |x_N| / N
  double drift = 0.0;
  // max_n d(x_n, ray(floor(drift * n))) / N
  double defect = 0.0;
};

inline RayTracking ray_tracking(const GroupModel& model, const StepDistribution& mu, const Trajectory& traj) {
  if (traj.final_position.empty()) throw PreconditionError("ray_tracking: final position is the identity");
  RayTracking r;
  const Element last = model.from_normal_form(traj.final_position);
  r.ray = model.geodesic_prefixes(last);
  const double n_total = static_cast<double>(traj.steps());
  r.drift = static_cast<double>(last.length()) / n_total;
  Word x;
  std::size_t worst = 0;
  for (std::size_t n = 1; n <= traj.steps(); ++n) {
    apply_step(model, x, mu.element(traj.increments[n - 1]).word());
    auto k = static_cast<std::size_t>(std::floor(r.drift * static_cast<double>(n) + 1e-9));
    k = std::min(k, last.length());
    worst = std::max(worst, model.distance_words(x, r.ray[k].word()));
  }
  r.defect = static_cast<double>(worst) / n_total;
  return r;
}

}  // namespace hyperwalk
