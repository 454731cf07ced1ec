// Command-line front end: one subcommand per pipeline stage plus the full
// pipeline. Flags override values from --config.

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "hyperwalk/pipeline.hpp"

using namespace hyperwalk;

namespace {

// Flags are parsed into scratch storage and applied to the config only when
// given on the command line.
class Overrides {
 public:
  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& help, std::function<void(ExperimentConfig&, const T&)> apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    rules_.push_back([opt, value, apply](ExperimentConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
  }
  void apply(ExperimentConfig& c) const {
    for (const auto& r : rules_) r(c);
  }

 private:
  std::vector<std::function<void(ExperimentConfig&)>> rules_;
};

struct Common {
  std::string config_path;
  unsigned threads = 0;
  Overrides overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON experiment config");
  app->add_option("--threads", c.threads, "worker threads (0 = hardware)");
  auto& o = c.overrides;
  o.add<std::string>(app, "--model", "built-in model name (F2, Z2*Z3, ...)", [](auto& cfg, auto& v) {
    cfg.model = v;
    cfg.model_file.clear();
  });
  o.add<std::string>(app, "--model-file", "model file", [](auto& cfg, auto& v) { cfg.model_file = v; });
  o.add<std::string>(app, "--steps", "built-in step distribution (uniform, M2)", [](auto& cfg, auto& v) {
    cfg.steps = v;
    cfg.steps_file.clear();
  });
  o.add<std::string>(app, "--steps-file", "step-distribution file", [](auto& cfg, auto& v) { cfg.steps_file = v; });
  o.add<std::string>(app, "--automaton-file", "automaton file", [](auto& cfg, auto& v) { cfg.automaton_file = v; });
  o.add<std::uint64_t>(app, "--seed", "master seed", [](auto& cfg, auto& v) { cfg.seed = v; });
  o.add<std::string>(app, "--out", "output directory", [](auto& cfg, auto& v) { cfg.output_dir = v; });
  o.add<std::uint64_t>(app, "--max-elements", "enumeration budget", [](auto& cfg, auto& v) { cfg.max_elements = v; });
}

void add_walk_flags(CLI::App* app, Common& c) {
  c.overrides.add<std::size_t>(app, "--walk-steps", "steps per walk", [](auto& cfg, auto& v) { cfg.walk_steps = v; });
  c.overrides.add<std::size_t>(app, "--replicas", "independent walks", [](auto& cfg, auto& v) { cfg.replicas = v; });
}

void add_grid_flag(CLI::App* app, Common& c) {
  c.overrides.add<std::string>(app, "--grid", "theta grid lo:hi:step", [](auto& cfg, auto& v) {
    std::vector<double> parts;
    std::stringstream ss(v);
    std::string p;
    try {
      while (std::getline(ss, p, ':')) parts.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw ConfigError("malformed --grid '" + v + "', expected lo:hi:step");
    }
    if (parts.size() != 3) throw ConfigError("malformed --grid '" + v + "', expected lo:hi:step");
    cfg.theta_lo = parts[0];
    cfg.theta_hi = parts[1];
    cfg.theta_step = parts[2];
  });
  c.overrides.add<std::size_t>(app, "--depth", "cylinder depth k", [](auto& cfg, auto& v) { cfg.potential_depth = v; });
}

void add_boundary_flags(CLI::App* app, Common& c) {
  auto& o = c.overrides;
  o.add<double>(app, "--radius", "shadow radius R", [](auto& cfg, auto& v) { cfg.shadow_radius = v; });
  o.add<double>(app, "--bound", "log-spread pass bound", [](auto& cfg, auto& v) { cfg.gibbs_bound = v; });
  o.add<std::size_t>(app, "--apexes", "number of apexes", [](auto& cfg, auto& v) { cfg.apex_count = v; });
  o.add<std::size_t>(app, "--apex-length", "max apex length", [](auto& cfg, auto& v) { cfg.apex_max_length = v; });
  o.add<std::size_t>(app, "--sphere", "sphere radius n", [](auto& cfg, auto& v) { cfg.sphere_depth = v; });
  o.add<std::size_t>(app, "--cone-depth", "cone depth for stationarity", [](auto& cfg, auto& v) { cfg.stationarity_depth = v; });
  o.add<std::size_t>(app, "--ray-depth", "local-dimension depth", [](auto& cfg, auto& v) { cfg.localdim_depth = v; });
  o.add<std::size_t>(app, "--trajectories", "local-dimension trajectories", [](auto& cfg, auto& v) { cfg.localdim_walks = v; });
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  c.overrides.apply(cfg);
  validate_config(cfg);
  if (c.threads) set_worker_count(c.threads);
  return cfg;
}

void print(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walks on hyperbolic groups: Green functions, pressure, boundary measures, experiments"};
  app.require_subcommand(1);
  // every leaf command gets its own option storage
  std::vector<std::unique_ptr<Common>> store;
  std::function<int()> action;
  auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& help) {
    store.push_back(std::make_unique<Common>());
    CLI::App* sub = parent->add_subcommand(name, help);
    add_common(sub, *store.back());
    return std::pair<CLI::App*, Common*>{sub, store.back().get()};
  };

  auto* aut = app.add_subcommand("automaton", "automatic-structure tools")->require_subcommand(1);
  {
    auto [sub, c] = leaf(aut, "validate", "check the automaton against brute-force spheres");
    c->overrides.add<std::size_t>(sub, "--depth", "validation depth", [](auto& cfg, auto& v) { cfg.validate_depth = v; });
    sub->callback([&action, c = c] {
      action = [c] {
        auto cfg = resolve(*c);
        ModelContext ctx(cfg);
        Bundle out(cfg.output_dir);
        auto rep = validate(ctx.automaton(), ctx.model(), cfg.validate_depth, cfg.budget());
        std::cout << rep.to_text();
        try {
          stage_validate(ctx, cfg, out);
        } catch (const Error&) {
          return 2;
        }
        return 0;
      };
    });
  }

  auto* walk = app.add_subcommand("walk", "random-walk statistics")->require_subcommand(1);
  {
    auto [sub, c] = leaf(walk, "stats", "drift, entropy (Green speed) and their ratio");
    add_walk_flags(sub, *c);
    sub->callback([&action, c = c] {
      action = [c] {
        auto cfg = resolve(*c);
        ModelContext ctx(cfg);
        Bundle out(cfg.output_dir);
        PipelineState st;
        print(stage_walk(ctx, cfg, st, out));
        return 0;
      };
    });
  }

  auto* thermo = app.add_subcommand("thermo", "pressure curve and multifractal spectrum")->require_subcommand(1);
  for (const char* name : {"beta", "spectrum"}) {
    auto [sub, c] = leaf(thermo, name, std::string(name) == "beta" ? "pressure curve on a theta grid"
                                                                    : "Legendre spectrum (alpha, f(alpha))");
    add_grid_flag(sub, *c);
    c->overrides.add<std::size_t>(sub, "--sphere", "sphere radius for direct sums", [](auto& cfg, auto& v) { cfg.sphere_depth = v; });
    sub->callback([&action, c = c] {
      action = [c] {
        auto cfg = resolve(*c);
        ModelContext ctx(cfg);
        Bundle out(cfg.output_dir);
        PipelineState st;
        print(stage_thermo(ctx, cfg, st, out));
        return 0;
      };
    });
  }

  auto* boundary = app.add_subcommand("boundary", "boundary-measure diagnostics")->require_subcommand(1);
  for (const char* name : {"gibbs", "localdim", "stationarity"}) {
    auto [sub, c] = leaf(boundary, name,
                         std::string(name) == "gibbs"      ? "Gibbs ratios over sampled apexes"
                         : std::string(name) == "localdim" ? "local-dimension sequences along walk rays"
                                                           : "stationarity residual of the harmonic cone table");
    add_boundary_flags(sub, *c);
    add_walk_flags(sub, *c);
    std::string which = name;
    sub->callback([&action, c = c, which] {
      action = [c, which] {
        auto cfg = resolve(*c);
        ModelContext ctx(cfg);
        Bundle out(cfg.output_dir);
        PipelineState st;
        if (which == "gibbs") {
          auto j = stage_boundary_gibbs(ctx, cfg, st, out);
          print(j);
          for (const auto& [k, v] : j.items())
            if (!v.value("pass", true)) return 2;
        } else if (which == "localdim") {
          stage_walk(ctx, cfg, st, out);
          print(stage_boundary_localdim(ctx, cfg, st, out));
        } else {
          print(stage_boundary_stationarity(ctx, cfg, out));
        }
        return 0;
      };
    });
  }

  auto* exper = app.add_subcommand("experiment", "finitary experiments")->require_subcommand(1);
  {
    auto [sub, c] = leaf(exper, "hitting", "annulus hitting distribution and covering numbers K_n(a)");
    add_walk_flags(sub, *c);
    auto& o = c->overrides;
    o.add<std::size_t>(sub, "--n", "annulus radius", [](auto& cfg, auto& v) { cfg.hitting_n = v; });
    o.add<std::size_t>(sub, "--walks", "number of walks", [](auto& cfg, auto& v) { cfg.hitting_walks = v; });
    o.add<std::vector<double>>(sub, "--a", "mass levels a", [](auto& cfg, auto& v) { cfg.hitting_a = v; });
    sub->callback([&action, c = c] {
      action = [c] {
        auto cfg = resolve(*c);
        ModelContext ctx(cfg);
        Bundle out(cfg.output_dir);
        PipelineState st;
        stage_walk(ctx, cfg, st, out);
        print(stage_hitting(ctx, cfg, st, out));
        return 0;
      };
    });
  }
  {
    auto [sub, c] = leaf(exper, "confine", "confinement-set growth with calibrated slack");
    add_walk_flags(sub, *c);
    auto& o = c->overrides;
    o.add<double>(sub, "--a", "escape probability a", [](auto& cfg, auto& v) { cfg.confine_a = v; });
    o.add<std::size_t>(sub, "--n", "enumeration depth", [](auto& cfg, auto& v) { cfg.confine_n = v; });
    o.add<std::size_t>(sub, "--walks", "calibration walks", [](auto& cfg, auto& v) { cfg.confine_walks = v; });
    o.add<std::size_t>(sub, "--calibration-steps", "steps per calibration walk", [](auto& cfg, auto& v) { cfg.confine_walk_steps = v; });
    o.add<double>(sub, "--c", "fixed slack constant (skip calibration)", [](auto& cfg, auto& v) { cfg.confine_c = v; });
    o.add<double>(sub, "--power", "slack exponent p in delta_n = c n^-p", [](auto& cfg, auto& v) { cfg.confine_power = v; });
    sub->callback([&action, c = c] {
      action = [c] {
        auto cfg = resolve(*c);
        ModelContext ctx(cfg);
        Bundle out(cfg.output_dir);
        PipelineState st;
        stage_walk(ctx, cfg, st, out);
        print(stage_confinement(ctx, cfg, st, out));
        return 0;
      };
    });
  }

  auto* report = app.add_subcommand("report", "summary reports")->require_subcommand(1);
  {
    auto [sub, c] = leaf(report, "fundamental", "h versus l v: verdict, pressure affinity, rigidity");
    add_walk_flags(sub, *c);
    sub->callback([&action, c = c] {
      action = [c] {
        auto cfg = resolve(*c);
        ModelContext ctx(cfg);
        Bundle out(cfg.output_dir);
        print(stage_fundamental(ctx, cfg, out));
        return 0;
      };
    });
  }

  auto* pipe = app.add_subcommand("pipeline", "end-to-end runs")->require_subcommand(1);
  {
    auto [sub, c] = leaf(pipe, "run", "run every stage and write the artifact bundle");
    add_walk_flags(sub, *c);
    sub->callback([&action, c = c] {
      action = [c] {
        ExperimentConfig cfg = c->config_path.empty() ? ExperimentConfig{} : load_config(c->config_path);
        c->overrides.apply(cfg);
        if (c->threads) set_worker_count(c->threads);
        auto res = run_pipeline(cfg);
        for (const auto& s : res.stages)
          std::cout << s.name << ' ' << (s.ok ? "ok" : "failed") << (s.message.empty() ? "" : ": " + s.message) << '\n';
        std::cout << "manifest " << res.manifest.string() << '\n';
        return res.ok() ? 0 : 1;
      };
    });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    return action ? action() : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
