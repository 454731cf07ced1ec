#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "common.hpp"
#include "group_model.hpp"

namespace hyperwalk {

class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

// Parses "0.25" or "1/4".
inline double parse_probability(const std::string& text) {
  auto slash = text.find('/');
  std::size_t pos = 0;
  if (slash == std::string::npos) {
    double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  }
  const std::string num = text.substr(0, slash), den = text.substr(slash + 1);
  double a = std::stod(num, &pos);
  if (pos != num.size()) throw std::invalid_argument(text);
  double b = std::stod(den, &pos);
  if (pos != den.size() || b == 0.0) throw std::invalid_argument(text);
  return a / b;
}

struct StepAtom {
  Element element;
  double probability;
  // Label as written by the user (kept for reports and round trips).
  std::string text;
};

// Finitely supported admissible probability measure on the group.
class StepDistribution {
 public:
  struct Options {
    // products of up to this many support elements are searched for the
    // identity and every generator
    std::size_t admissibility_depth = 10;
    std::size_t admissibility_budget = 2'000'000;
  };

  StepDistribution(const GroupModel& model, std::vector<StepAtom> atoms)
      : StepDistribution(model, std::move(atoms), Options{}) {}

  StepDistribution(const GroupModel& model, std::vector<StepAtom> atoms, Options opts)
      : atoms_(std::move(atoms)), model_id_(model.id()) {
    if (atoms_.empty()) throw AdmissibilityError("step distribution has empty support");
    double total = 0.0;
    std::unordered_set<Word, WordHash> seen;
    for (auto& a : atoms_) {
      model.check_same(a.element);
      if (!(a.probability > 0.0))
        throw AdmissibilityError("step probabilities must be positive");
      if (!seen.insert(a.element.word()).second)
        throw AdmissibilityError("duplicate support element " + model.format(a.element));
      if (a.text.empty()) a.text = model.format(a.element);
      total += a.probability;
      reach_ = std::max(reach_, a.element.length());
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw AdmissibilityError("step probabilities sum to " + std::to_string(total) + ", not 1");
    check_admissible(model, opts);
    double acc = 0.0;
    for (const auto& a : atoms_) cumulative_.push_back(acc += a.probability / total);
    cumulative_.back() = 1.0;
    nearest_neighbor_ = std::all_of(atoms_.begin(), atoms_.end(),
                                    [](const StepAtom& a) { return a.element.length() == 1; });
  }

  // Uniform measure on the generating set.
  static StepDistribution uniform(const GroupModel& model) {
    std::vector<StepAtom> atoms;
    const double p = 1.0 / static_cast<double>(model.alphabet_size());
    for (Letter x = 0; x < model.alphabet_size(); ++x)
      atoms.push_back({model.reduce(Word{x}), p, "1/" + std::to_string(model.alphabet_size())});
    return StepDistribution(model, std::move(atoms));
  }

  // "uniform", or "M2": the biased nearest-neighbour walk on F2 with
  // mu(a)=0.4, mu(A)=0.1, mu(b)=0.3, mu(B)=0.2.
  static StepDistribution builtin(const GroupModel& model, const std::string& name) {
    if (name == "uniform") return uniform(model);
    if (name == "M2") {
      if (model.label() != "F2") throw ModelError("built-in step distribution M2 needs model F2");
      return StepDistribution(model, {{model.element("a"), 0.4, "0.4"},
                                      {model.element("A"), 0.1, "0.1"},
                                      {model.element("b"), 0.3, "0.3"},
                                      {model.element("B"), 0.2, "0.2"}});
    }
    throw ModelError("unknown built-in step distribution: " + name);
  }

  // Lines "word probability"; '#' comments.
  static StepDistribution parse(std::istream& in, const GroupModel& model,
                                const std::string& source = "<steps>") {
    std::vector<StepAtom> atoms;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      std::istringstream ls(line);
      std::vector<std::string> tok;
      for (std::string t; ls >> t;) tok.push_back(t);
      if (tok.empty()) continue;
      if (tok.size() != 2) throw ParseError(source, lineno, "expected 'word probability'");
      Element e;
      try {
        e = model.element(tok[0]);
      } catch (const ModelError& err) {
        throw ParseError(source, lineno, err.what());
      }
      double p;
      try {
        p = parse_probability(tok[1]);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "malformed probability '" + tok[1] + "'");
      }
      atoms.push_back({e, p, tok[1]});
    }
    return StepDistribution(model, std::move(atoms));
  }

  static StepDistribution load(const std::string& path, const GroupModel& model) {
    std::ifstream f(path);
    if (!f) throw ModelError("cannot open step-distribution file: " + path);
    return parse(f, model, path);
  }

  const std::vector<StepAtom>& atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  const Element& element(std::size_t i) const { return atoms_.at(i).element; }
  double probability(std::size_t i) const { return atoms_.at(i).probability; }
  std::size_t reach() const noexcept { return reach_; }
  bool nearest_neighbor() const noexcept { return nearest_neighbor_; }
  std::uint64_t model_id() const noexcept { return model_id_; }

  // mu(x), zero off the support.
  double mass(const Element& x) const {
    for (const auto& a : atoms_)
      if (a.element == x) return a.probability;
    return 0.0;
  }

  // Index of a support atom drawn from mu; safe to call concurrently.
  std::size_t sample(Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                 atoms_.size() - 1);
  }

  std::string to_text(const GroupModel& model) const {
    std::ostringstream os;
    for (const auto& a : atoms_) os << model.format(a.element) << ' ' << a.text << '\n';
    return os.str();
  }

 private:
  // The semigroup generated by the support must contain the identity and
  // every generator; searched breadth-first over bounded-length products.
  void check_admissible(const GroupModel& model, const Options& opts) const {
    std::unordered_set<Word, WordHash> targets;
    targets.insert(Word{});
    for (Letter x = 0; x < model.alphabet_size(); ++x) targets.insert(Word{x});
    std::unordered_set<Word, WordHash> seen;
    std::vector<Word> frontier;
    for (const auto& a : atoms_) {
      if (seen.insert(a.element.word()).second) frontier.push_back(a.element.word());
      targets.erase(a.element.word());
    }
    for (std::size_t depth = 2; depth <= opts.admissibility_depth && !targets.empty(); ++depth) {
      std::vector<Word> next;
      for (const auto& w : frontier) {
        for (const auto& a : atoms_) {
          Word v = w;
          if (model.is_free_product()) {
            for (Letter c : a.element.word()) model.push_letter(v, c);
          } else {
            v.insert(v.end(), a.element.word().begin(), a.element.word().end());
            v = model.reduce(v).word();
          }
          if (seen.insert(v).second) {
            targets.erase(v);
            next.push_back(std::move(v));
            if (seen.size() > opts.admissibility_budget) break;
          }
        }
        if (seen.size() > opts.admissibility_budget) break;
      }
      frontier.swap(next);
      if (frontier.empty()) break;
    }
    if (!targets.empty()) {
      throw AdmissibilityError("step distribution is not admissible: its support does not generate " +
                               model.format(*targets.begin()) + " as a semigroup");
    }
  }

  std::vector<StepAtom> atoms_;
  std::size_t reach_ = 0;
  bool nearest_neighbor_ = false;
  std::uint64_t model_id_;
  std::vector<double> cumulative_;
};

}  // namespace hyperwalk
