#pragma once

// Experiment configuration (JSON) and the loaded model context it describes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "automaton.hpp"
#include "common.hpp"
#include "green.hpp"
#include "group_model.hpp"
#include "step_distribution.hpp"

namespace hyperwalk {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ExperimentConfig {
  // Built-in model name (F2, Z2*Z3, ...) unless model_file is set.
  std::string model = "F2";
  std::string model_file;
  // "uniform" / "M2" unless steps_file is set.
  std::string steps = "uniform";
  std::string steps_file;
  // empty: built-in automaton
  std::string automaton_file;

  std::uint64_t seed = 1;
  std::uint64_t max_elements = 50'000'000;

  std::size_t validate_depth = 10;
  // ball radius for non-tree Green solves
  std::size_t horizon = 12;
  std::size_t walk_steps = 2000;
  std::size_t replicas = 400;

  std::size_t potential_depth = 1;
  double theta_lo = -1.0, theta_hi = 2.0, theta_step = 0.05;
  std::size_t sphere_depth = 10;

  // negative: 0 on Cayley trees, 4 delta otherwise
  double shadow_radius = -1.0;
  std::size_t apex_max_length = 8;
  std::size_t apex_count = 200;
  double gibbs_bound = 0.1;
  std::size_t stationarity_depth = 5;
  std::size_t localdim_depth = 200;
  std::size_t localdim_walks = 100;

  std::size_t hitting_n = 10;
  std::size_t hitting_walks = 100000;
  std::vector<double> hitting_a{0.25, 0.5, 0.75};

  double confine_a = 0.2;
  std::size_t confine_n = 14;
  std::size_t confine_walks = 1000;
  std::size_t confine_walk_steps = 400;
  // negative: calibrate; otherwise the slack constant c
  double confine_c = -1.0;
  double confine_c_max = 20.0;
  // delta_n = c n^-confine_power
  double confine_power = 0.5;

  std::string output_dir = "out";

  Budget budget() const { return Budget{max_elements}; }
};

inline void to_json(nlohmann::ordered_json& j, const ExperimentConfig& c) {
  j = nlohmann::ordered_json{
      {"model", c.model},
      {"model_file", c.model_file},
      {"steps", c.steps},
      {"steps_file", c.steps_file},
      {"automaton_file", c.automaton_file},
      {"seed", c.seed},
      {"max_elements", c.max_elements},
      {"validate_depth", c.validate_depth},
      {"horizon", c.horizon},
      {"walk_steps", c.walk_steps},
      {"replicas", c.replicas},
      {"potential_depth", c.potential_depth},
      {"theta_lo", c.theta_lo},
      {"theta_hi", c.theta_hi},
      {"theta_step", c.theta_step},
      {"sphere_depth", c.sphere_depth},
      {"shadow_radius", c.shadow_radius},
      {"apex_max_length", c.apex_max_length},
      {"apex_count", c.apex_count},
      {"gibbs_bound", c.gibbs_bound},
      {"stationarity_depth", c.stationarity_depth},
      {"localdim_depth", c.localdim_depth},
      {"localdim_walks", c.localdim_walks},
      {"hitting_n", c.hitting_n},
      {"hitting_walks", c.hitting_walks},
      {"hitting_a", c.hitting_a},
      {"confine_a", c.confine_a},
      {"confine_n", c.confine_n},
      {"confine_walks", c.confine_walks},
      {"confine_walk_steps", c.confine_walk_steps},
      {"confine_c", c.confine_c},
      {"confine_c_max", c.confine_c_max},
      {"confine_power", c.confine_power},
      {"output_dir", c.output_dir},
  };
}

namespace detail {
template <class T>
void read_field(const nlohmann::ordered_json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}
}  // namespace detail

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::ordered_json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  nlohmann::ordered_json known;
  to_json(known, c);
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("unknown config field '" + k + "'");
  using detail::read_field;
  read_field(j, "model", c.model);
  read_field(j, "model_file", c.model_file);
  read_field(j, "steps", c.steps);
  read_field(j, "steps_file", c.steps_file);
  read_field(j, "automaton_file", c.automaton_file);
  read_field(j, "seed", c.seed);
  read_field(j, "max_elements", c.max_elements);
  read_field(j, "validate_depth", c.validate_depth);
  read_field(j, "horizon", c.horizon);
  read_field(j, "walk_steps", c.walk_steps);
  read_field(j, "replicas", c.replicas);
  read_field(j, "potential_depth", c.potential_depth);
  read_field(j, "theta_lo", c.theta_lo);
  read_field(j, "theta_hi", c.theta_hi);
  read_field(j, "theta_step", c.theta_step);
  read_field(j, "sphere_depth", c.sphere_depth);
  read_field(j, "shadow_radius", c.shadow_radius);
  read_field(j, "apex_max_length", c.apex_max_length);
  read_field(j, "apex_count", c.apex_count);
  read_field(j, "gibbs_bound", c.gibbs_bound);
  read_field(j, "stationarity_depth", c.stationarity_depth);
  read_field(j, "localdim_depth", c.localdim_depth);
  read_field(j, "localdim_walks", c.localdim_walks);
  read_field(j, "hitting_n", c.hitting_n);
  read_field(j, "hitting_walks", c.hitting_walks);
  read_field(j, "hitting_a", c.hitting_a);
  read_field(j, "confine_a", c.confine_a);
  read_field(j, "confine_n", c.confine_n);
  read_field(j, "confine_walks", c.confine_walks);
  read_field(j, "confine_walk_steps", c.confine_walk_steps);
  read_field(j, "confine_c", c.confine_c);
  read_field(j, "confine_c_max", c.confine_c_max);
  read_field(j, "confine_power", c.confine_power);
  read_field(j, "output_dir", c.output_dir);
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  nlohmann::ordered_json ja, jb;
  to_json(ja, a);
  to_json(jb, b);
  return ja == jb;
}

// Canonical text form; doubles are written shortest-round-trip by the JSON
// library, so parse(dump(c)) == c.
inline std::string dump_config(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  to_json(j, c);
  return j.dump(2) + "\n";
}

inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  ExperimentConfig c;
  from_json(j, c);
  return c;
}

// Relative file references are resolved against the config file's directory.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  ExperimentConfig c = parse_config(ss.str(), path);
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* p : {&c.model_file, &c.steps_file, &c.automaton_file})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  return c;
}

// Budgets positive, ranges sane, referenced files present.
inline void validate_config(const ExperimentConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  need(c.max_elements > 0, "max_elements must be positive");
  need(c.walk_steps > 0 && c.replicas > 1, "walk_steps > 0 and replicas > 1 required");
  need(c.potential_depth > 0, "potential_depth must be positive");
  need(c.theta_step > 0 && c.theta_lo <= c.theta_hi, "theta grid needs theta_lo <= theta_hi and theta_step > 0");
  need(c.sphere_depth > 0 && c.apex_max_length > 0 && c.apex_count > 0, "sphere/apex budgets must be positive");
  need(c.apex_max_length <= c.sphere_depth, "apex_max_length must not exceed sphere_depth");
  need(c.gibbs_bound > 0, "gibbs_bound must be positive");
  need(c.stationarity_depth > 1, "stationarity_depth must be at least 2");
  need(c.localdim_depth > 0 && c.localdim_walks > 1, "local-dimension budgets must be positive");
  need(c.hitting_n > 0 && c.hitting_walks > 0, "hitting budgets must be positive");
  for (double a : c.hitting_a) need(a >= 0 && a <= 1, "hitting_a values must lie in [0,1]");
  need(c.confine_a > 0 && c.confine_a < 1, "confine_a must lie in (0,1)");
  need(c.confine_n > 0 && c.confine_walks > 0 && c.confine_walk_steps > 0, "confinement budgets must be positive");
  need(c.confine_c_max > 0, "confine_c_max must be positive");
  need(c.confine_power >= 0 && c.confine_power <= 1, "confine_power must lie in [0,1]");
  for (const std::string* p : {&c.model_file, &c.steps_file, &c.automaton_file})
    if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("referenced file does not exist: " + *p);
}

// Model, step distribution, automaton and Green backend for one config.
class ModelContext {
 public:
  explicit ModelContext(const ExperimentConfig& c)
      : model_(c.model_file.empty() ? GroupModel::builtin(c.model) : GroupModel::load(c.model_file)),
        mu_(c.steps_file.empty() ? StepDistribution::builtin(model_, c.steps)
                                 : StepDistribution::load(c.steps_file, model_)),
        aut_(c.automaton_file.empty() ? Automaton::builtin(model_, c.budget())
                                      : Automaton::load(c.automaton_file, model_)),
        green_(make_green(model_, mu_, c.horizon, c.budget())),
        radius_(c.shadow_radius >= 0 ? c.shadow_radius : (cayley_tree(model_) ? 0.0 : 4 * model_.delta())) {}
  ModelContext(const ModelContext&) = delete;
  ModelContext& operator=(const ModelContext&) = delete;

  const GroupModel& model() const noexcept { return model_; }
  const StepDistribution& mu() const noexcept { return mu_; }
  const Automaton& automaton() const noexcept { return aut_; }
  const GreenFunction& green() const noexcept { return *green_; }
  double shadow_radius() const noexcept { return radius_; }

 private:
  GroupModel model_;
  StepDistribution mu_;
  Automaton aut_;
  std::unique_ptr<GreenFunction> green_;
  double radius_;
};

}  // namespace hyperwalk
