#pragma once

// End-to-end pipeline: validate -> green -> walk stats -> thermo -> boundary
// -> experiments -> report. Every stage writes CSV tables and a JSON summary
// into the output directory; a plain-text manifest records hashes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "automaton.hpp"
#include "boundary.hpp"
#include "config.hpp"
#include "experiments.hpp"
#include "green.hpp"
#include "thermo.hpp"
#include "walk_stats.hpp"

namespace hyperwalk {

inline constexpr const char* kVersion = "hyperwalk 1.0.0";

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Fixed formatting so reruns produce identical bytes.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

inline nlohmann::ordered_json estimate_json(const EstimateWithError& e) {
  return {{"value", e.value}, {"std_error", e.std_error}, {"samples", e.samples}, {"method", e.method}};
}

// Output directory plus the list of files written so far.
class Bundle {
 public:
  explicit Bundle(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw Error("cannot write output file: " + (dir_ / name).string());
    f << text;
    files_.emplace_back(name, fnv1a(text));
  }
  void write_json(const std::string& name, const nlohmann::ordered_json& j) { write_text(name, j.dump(2) + "\n"); }
  void write_csv(const std::string& name, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    write_text(name, os.str());
  }

  const std::filesystem::path& dir() const noexcept { return dir_; }
  const std::vector<std::pair<std::string, std::uint64_t>>& files() const noexcept { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::uint64_t>> files_;
};

// Results later stages depend on.
struct PipelineState {
  std::optional<WalkEstimates> walk;
  std::optional<PotentialScheme> scheme;
  std::optional<PressureCurve> curve;
  double growth = std::numeric_limits<double>::quiet_NaN();
};

// ---------------------------------------------------------------- stages

inline nlohmann::ordered_json stage_validate(const ModelContext& ctx, const ExperimentConfig& cfg, Bundle& out) {
  auto rep = validate(ctx.automaton(), ctx.model(), cfg.validate_depth, cfg.budget());
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rep.rows)
    rows.push_back({std::to_string(r.depth), std::to_string(r.paths), std::to_string(r.sphere),
                    std::to_string(r.non_geodesic), std::to_string(r.duplicates), std::to_string(r.missing)});
  out.write_csv("validate.csv", {"depth", "paths", "sphere", "non_geodesic", "duplicates", "missing"}, rows);
  nlohmann::ordered_json j{{"pass", rep.pass}, {"depth", cfg.validate_depth}, {"counterexamples", rep.counterexamples}};
  out.write_json("validate.json", j);
  if (!rep.pass) throw Error("automaton validation failed: " + rep.to_text());
  return j;
}

inline nlohmann::ordered_json stage_green(const ModelContext& ctx, Bundle& out) {
  const auto& m = ctx.model();
  const auto& g = ctx.green();
  std::vector<std::vector<std::string>> rows;
  for (Letter l = 0; l < m.alphabet_size(); ++l)
    rows.push_back({m.name(l), fmt(g.first_passage_word(Word{l})), fmt(g.green_word(Word{l}))});
  out.write_csv("green.csv", {"generator", "first_passage", "green"}, rows);
  nlohmann::ordered_json j{{"method", g.method()}, {"green_identity", g.green_identity()}};
  out.write_json("green.json", j);
  return j;
}

inline nlohmann::ordered_json stage_walk(const ModelContext& ctx, const ExperimentConfig& cfg, PipelineState& st,
                                         Bundle& out) {
  st.walk = estimate_walk(ctx.model(), ctx.mu(), ctx.green(), cfg.walk_steps, cfg.replicas, cfg.seed);
  nlohmann::ordered_json j{{"steps", cfg.walk_steps},
                           {"replicas", cfg.replicas},
                           {"drift", estimate_json(st.walk->drift)},
                           {"entropy", estimate_json(st.walk->entropy)},
                           {"dimension", estimate_json(st.walk->dimension)}};
  out.write_json("walk.json", j);
  return j;
}

inline nlohmann::ordered_json stage_thermo(const ModelContext& ctx, const ExperimentConfig& cfg, PipelineState& st,
                                           Bundle& out) {
  st.growth = growth_rate(ctx.automaton());
  st.scheme = build_potential(ctx.automaton(), ctx.model(), ctx.green(), cfg.potential_depth, cfg.budget());
  st.curve = beta_curve(*st.scheme, make_grid(cfg.theta_lo, cfg.theta_hi, cfg.theta_step));
  const auto& c = *st.curve;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < c.theta.size(); ++i) {
    std::string maximal;
    for (std::size_t k = 0; k < c.maximal[i].size(); ++k) maximal += (k ? ";" : "") + std::to_string(c.maximal[i][k]);
    rows.push_back({fmt(c.theta[i]), fmt(c.beta[i]), fmt(c.derivative[i]), fmt(c.curvature[i]), maximal});
  }
  out.write_csv("beta.csv", {"theta", "beta", "derivative", "curvature", "maximal_components"}, rows);

  nlohmann::ordered_json j{{"growth", st.growth},
                           {"potential_mode", st.scheme->mode()},
                           {"beta_at_0", pressure(*st.scheme, 0.0).beta},
                           {"beta_at_1", pressure(*st.scheme, 1.0).beta},
                           {"convex", c.convex},
                           {"min_curvature", c.min_curvature}};
  nlohmann::ordered_json semi = nlohmann::ordered_json::array();
  for (double t : {-1.0, 0.0, 0.5, 1.0, 2.0}) {
    auto r = semisimplicity_check(*st.scheme, t);
    semi.push_back({{"theta", t}, {"pass", r.pass}, {"beta", r.beta}});
  }
  j["semisimplicity"] = semi;
  if (c.convex) {
    auto s = legendre(c);
    rows.clear();
    for (const auto& p : s.points) rows.push_back({fmt(p.theta), fmt(p.alpha), fmt(p.f)});
    out.write_csv("spectrum.csv", {"theta", "alpha", "f"}, rows);
    j["alpha_min"] = s.alpha_min;
    j["alpha_max"] = s.alpha_max;
    j["f_max"] = s.f_max;
    j["theta_at_f_max"] = s.theta_at_f_max;
    j["spectrum_extrapolated"] = s.extrapolated;
  }
  // direct sphere sums against the operator
  rows.clear();
  auto logs = sphere_log_green(ctx.model(), ctx.green(), cfg.sphere_depth, cfg.budget());
  for (double t : {0.0, 0.5, 1.0, 2.0}) {
    auto d = beta_direct_from_logs(logs, cfg.sphere_depth, t);
    rows.push_back({fmt(t), std::to_string(cfg.sphere_depth), fmt(d.value), fmt(pressure(*st.scheme, t).beta)});
  }
  out.write_csv("beta_direct.csv", {"theta", "n", "direct", "operator"}, rows);
  out.write_json("thermo.json", j);
  return j;
}

inline std::vector<std::vector<std::string>> gibbs_rows(const ModelContext& ctx, const GibbsReport& r,
                                                        const std::string& label) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : r.rows)
    rows.push_back({label, ctx.model().format(row.apex), std::to_string(row.apex.length()), fmt(row.log_mass),
                    fmt(row.log_reference), fmt(row.log_ratio)});
  return rows;
}

inline nlohmann::ordered_json gibbs_json(const GibbsReport& r) {
  return {{"method", r.method}, {"min", r.min}, {"max", r.max}, {"spread", r.spread}, {"bound", r.bound},
          {"pass", r.pass}};
}

inline nlohmann::ordered_json stage_boundary_gibbs(const ModelContext& ctx, const ExperimentConfig& cfg,
                                                   PipelineState& st, Bundle& out) {
  if (!st.scheme) st.scheme = build_potential(ctx.automaton(), ctx.model(), ctx.green(), cfg.potential_depth, cfg.budget());
  auto apexes = sample_apexes(ctx.model(), cfg.apex_max_length, cfg.apex_count, cfg.seed, cfg.budget());
  std::vector<std::vector<std::string>> rows;
  nlohmann::ordered_json j;
  for (double t : {0.0, 1.0}) {
    auto r = gibbs_ratio_report(ctx.model(), ctx.green(), t, pressure(*st.scheme, t).beta, apexes, cfg.sphere_depth,
                                ctx.shadow_radius(), cfg.gibbs_bound, cfg.budget());
    auto more = gibbs_rows(ctx, r, "mu_theta=" + fmt(t));
    rows.insert(rows.end(), more.begin(), more.end());
    j["mu_theta_" + fmt(t)] = gibbs_json(r);
  }
  if (ctx.model().is_tree_like() && ctx.mu().nearest_neighbor() && ctx.shadow_radius() == 0) {
    auto r = harmonic_gibbs_report(ctx.model(), ctx.mu(), ctx.green(), apexes, "exact-tree", cfg.gibbs_bound);
    auto more = gibbs_rows(ctx, r, "harmonic");
    rows.insert(rows.end(), more.begin(), more.end());
    j["harmonic"] = gibbs_json(r);
  }
  out.write_csv("gibbs.csv", {"measure", "apex", "length", "log_mass", "log_reference", "log_ratio"}, rows);
  out.write_json("gibbs.json", j);
  return j;
}

inline nlohmann::ordered_json stage_boundary_stationarity(const ModelContext& ctx, const ExperimentConfig& cfg,
                                                          Bundle& out) {
  nlohmann::ordered_json j;
  if (!ctx.model().is_tree_like() || !ctx.mu().nearest_neighbor()) {
    j["skipped"] = "exact cone algebra needs a tree-like model and nearest-neighbour steps";
  } else {
    auto table = harmonic_table_exact(ctx.model(), ctx.mu(), cfg.stationarity_depth, cfg.budget());
    auto rep = stationarity_residual(ctx.model(), table, ctx.mu());
    auto counting = mutheta_table(ctx.model(), ctx.green(), 0.0, cfg.stationarity_depth, cfg.sphere_depth, cfg.budget());
    auto control = stationarity_residual(ctx.model(), counting, ctx.mu());
    j["depth"] = cfg.stationarity_depth;
    j["tested_depth"] = rep.tested_depth;
    j["harmonic_residual"] = rep.residual;
    j["harmonic_normalization_residual"] = table.normalization_residual;
    j["counting_residual"] = control.residual;
    j["counting_max_cone_error"] = control.max_cone_error;
    std::vector<std::vector<std::string>> rows;
    for (const auto& [w, p] : table.masses) rows.push_back({ctx.model().format(ctx.model().from_normal_form(w)), fmt(p)});
    out.write_csv("harmonic_cones.csv", {"cone", "mass"}, rows);
  }
  out.write_json("stationarity.json", j);
  return j;
}

inline nlohmann::ordered_json stage_boundary_localdim(const ModelContext& ctx, const ExperimentConfig& cfg,
                                                      PipelineState& st, Bundle& out) {
  std::vector<Trajectory> ts;
  // slow-drift walks are run longer (same stream) until the ray is deep enough
  for (std::size_t r = 0; r < cfg.localdim_walks; ++r) {
    std::size_t steps = cfg.walk_steps;
    Trajectory t = simulate(ctx.model(), ctx.mu(), steps, cfg.seed, 1'000'000 + r);
    while (t.final_position.size() < cfg.localdim_depth && steps < 64 * cfg.walk_steps) {
      steps *= 2;
      t = simulate(ctx.model(), ctx.mu(), steps, cfg.seed, 1'000'000 + r);
    }
    ts.push_back(std::move(t));
  }
  auto ld = local_dimension_samples(ctx.model(), ctx.green(), ts, cfg.localdim_depth);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < ld.sequences.size(); ++i)
    for (std::size_t n = 10; n <= cfg.localdim_depth; n += 10)
      rows.push_back({std::to_string(i), std::to_string(n), fmt(ld.sequences[i][n - 1])});
  out.write_csv("localdim.csv", {"trajectory", "n", "value"}, rows);
  nlohmann::ordered_json j{{"depth", cfg.localdim_depth}, {"mean", estimate_json(ld.at_n_max)}};
  if (st.walk) j["walk_dimension"] = estimate_json(st.walk->dimension);
  out.write_json("localdim.json", j);
  return j;
}

inline nlohmann::ordered_json stage_hitting(const ModelContext& ctx, const ExperimentConfig& cfg,
                                            const PipelineState& st, Bundle& out) {
  const double target = st.walk ? st.walk->dimension.value : std::numeric_limits<double>::quiet_NaN();
  auto recs = hitting_experiment(ctx.model(), ctx.mu(), cfg.hitting_n, cfg.hitting_walks, cfg.hitting_a, cfg.seed,
                                 target);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : recs)
    for (std::size_t i = 0; i < r.a.size(); ++i)
      rows.push_back({std::to_string(r.n), fmt(r.a[i]), std::to_string(r.k[i]), fmt(r.exponent[i]),
                      std::to_string(r.distinct()), std::to_string(r.excluded)});
  out.write_csv("hitting.csv", {"n", "a", "K", "exponent", "distinct", "excluded"}, rows);
  const auto& last = recs.back();
  nlohmann::ordered_json j{{"n", last.n},          {"walks", last.walks},       {"excluded", last.excluded},
                           {"distinct", last.distinct()}, {"mass_sum", last.mass_sum}, {"target", target}};
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < last.a.size(); ++i)
    per.push_back({{"a", last.a[i]}, {"K", last.k[i]}, {"exponent", last.exponent[i]}});
  j["levels"] = per;
  out.write_json("hitting.json", j);
  return j;
}

inline nlohmann::ordered_json stage_confinement(const ModelContext& ctx, const ExperimentConfig& cfg,
                                                PipelineState& st, Bundle& out) {
  nlohmann::ordered_json j;
  if (!cayley_tree(ctx.model()) || !ctx.mu().nearest_neighbor()) {
    j["skipped"] = "confinement counting needs a Cayley tree and nearest-neighbour steps";
    out.write_json("confinement.json", j);
    return j;
  }
  if (!st.walk) throw PreconditionError("confinement needs walk estimates");
  if (!std::isfinite(st.growth)) st.growth = growth_rate(ctx.automaton());
  ConfinementOptions o;
  o.a = cfg.confine_a;
  o.n_max = cfg.confine_n;
  o.walks = cfg.confine_walks;
  o.walk_steps = cfg.confine_walk_steps;
  o.seed = cfg.seed;
  o.power = cfg.confine_power;
  if (cfg.confine_c >= 0) o.c = cfg.confine_c;
  o.c_max = cfg.confine_c_max;
  o.budget = cfg.budget();
  auto r = confinement_experiment(ctx.model(), ctx.mu(), solve_tree_first_passage(ctx.model(), ctx.mu()),
                                  st.walk->dimension.value, st.growth, o);
  std::vector<std::vector<std::string>> rows;
  for (const auto& L : r.levels)
    rows.push_back({std::to_string(L.n), std::to_string(L.sphere), std::to_string(L.gamma), std::to_string(L.v_set),
                    fmt(L.gamma_exponent), fmt(L.v_exponent)});
  out.write_csv("confinement.csv", {"n", "sphere", "gamma", "v_set", "gamma_exponent", "v_exponent"}, rows);
  j = {{"a", r.a},
       {"target", r.target},
       {"growth", r.growth},
       {"slack_c", r.c},
       {"slack_power", cfg.confine_power},
       {"calibrated", r.calibrated},
       {"calibration", "empirical"},
       {"coverage", r.coverage},
       {"walks", r.walks},
       {"n", cfg.confine_n},
       {"exponent", r.exponent}};
  out.write_json("confinement.json", j);
  return j;
}

inline nlohmann::ordered_json fundamental_json(const FundamentalReport& r) {
  return {{"verdict", r.verdict},
          {"growth", r.growth},
          {"drift", estimate_json(r.drift)},
          {"entropy", estimate_json(r.entropy)},
          {"dimension", estimate_json(r.dimension)},
          {"gap", r.gap},
          {"gap_se", r.gap_se},
          {"paired_se", r.paired_se},
          {"beta_max_curvature", r.beta_max_curvature},
          {"beta_max_second_difference", r.beta_max_second_difference},
          {"beta_affine", r.beta_affine},
          {"rigidity_spread", r.rigidity_spread},
          {"errors", r.errors}};
}

inline nlohmann::ordered_json stage_fundamental(const ModelContext& ctx, const ExperimentConfig& cfg, Bundle& out) {
  FundamentalOptions o;
  o.steps = cfg.walk_steps;
  o.replicas = cfg.replicas;
  o.seed = cfg.seed;
  o.potential_depth = cfg.potential_depth;
  o.rigidity_depth = cfg.apex_max_length;
  o.budget = cfg.budget();
  auto j = fundamental_json(fundamental_report(ctx.model(), ctx.mu(), ctx.automaton(), ctx.green(), o));
  out.write_json("fundamental.json", j);
  return j;
}

// ---------------------------------------------------------------- pipeline

struct StageStatus {
  std::string name;
  bool ok = false;
  std::string message;
};

struct PipelineResult {
  std::vector<StageStatus> stages;
  std::filesystem::path manifest;
  bool ok() const {
    for (const auto& s : stages)
      if (!s.ok) return false;
    return !stages.empty();
  }
};

// Runs every stage in order, stopping at the first failure; outputs of
// completed stages stay on disk and the manifest records the failure.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, std::optional<std::string> out_dir = std::nullopt) {
  const std::filesystem::path dir = out_dir ? *out_dir : cfg.output_dir;
  Bundle out(dir);
  PipelineResult res;
  const std::string cfg_text = dump_config(cfg);
  out.write_text("config.json", cfg_text);
  std::unique_ptr<ModelContext> ctx;
  PipelineState st;
  auto run = [&](const std::string& name, auto&& fn) {
    if (!res.stages.empty() && !res.stages.back().ok) return;
    StageStatus s{name};
    try {
      fn();
      s.ok = true;
    } catch (const std::exception& e) {
      s.message = e.what();
    }
    res.stages.push_back(s);
  };
  run("load", [&] {
    validate_config(cfg);
    ctx = std::make_unique<ModelContext>(cfg);
  });
  run("validate", [&] { stage_validate(*ctx, cfg, out); });
  run("green", [&] { stage_green(*ctx, out); });
  run("walk_stats", [&] { stage_walk(*ctx, cfg, st, out); });
  run("thermo", [&] { stage_thermo(*ctx, cfg, st, out); });
  run("boundary", [&] {
    stage_boundary_gibbs(*ctx, cfg, st, out);
    stage_boundary_stationarity(*ctx, cfg, out);
    stage_boundary_localdim(*ctx, cfg, st, out);
  });
  run("experiments", [&] {
    stage_hitting(*ctx, cfg, st, out);
    stage_confinement(*ctx, cfg, st, out);
  });
  run("report", [&] { stage_fundamental(*ctx, cfg, out); });

  std::ostringstream m;
  m << "version " << kVersion << '\n';
  m << "config_hash " << hex64(fnv1a(cfg_text)) << '\n';
  m << "seed " << cfg.seed << '\n';
  for (const auto& s : res.stages)
    m << "stage " << s.name << ' ' << (s.ok ? "ok" : "failed") << (s.message.empty() ? "" : " " + s.message) << '\n';
  for (const auto& [name, h] : out.files()) m << "output " << name << ' ' << hex64(h) << '\n';
  std::ofstream f(dir / "manifest.txt", std::ios::binary);
  f << m.str();
  res.manifest = dir / "manifest.txt";
  return res;
}

}  // namespace hyperwalk
