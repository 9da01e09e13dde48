#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "combibandit/engine.hpp"
#include "combibandit/inference.hpp"
#include "combibandit/metrics.hpp"
#include "combibandit/posterior.hpp"
#include "combibandit/solvers.hpp"

namespace combibandit {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sectioned key = value text. '#' and ';' start comments; keys outside a
// section are an error.
struct IniFile {
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };
  std::string source = "config";
  std::map<std::string, std::map<std::string, Entry>> sections;

  static IniFile parse(std::istream& in, std::string source = "config");
  static IniFile load(const std::filesystem::path& path);
  // "section.key=value", as given on the command line.
  void apply_override(const std::string& assignment);
};

struct ScenarioConfig {
  // Bandit runs (simulate, infer).
  std::string set = "top_m";  // top_m | assignment | capacitated | knapsack
  std::size_t d = 4;
  std::size_t m = 2;
  std::size_t k = 2;
  std::size_t items = 0;
  std::vector<int> capacities;
  std::vector<int> weights;
  std::string types = "auto";  // auto | identity | grid
  // Empty means uniform draws on [0,1] from the run seed.
  std::vector<double> theta0;
  OutcomeFamily outcome = OutcomeFamily::bernoulli;
  double sigma_sq = 0.01;
  double dispersion = 10.0;
  int y_bar = 1;
  std::size_t horizon = 100;

  // Resettlement runs. Without a cases file a synthetic scenario is drawn.
  std::filesystem::path cases;
  std::filesystem::path affiliates;
  std::filesystem::path theta0_file;
  std::size_t months = 24;
  std::size_t k_u = 8;
  std::size_t k_v = 17;
  double arrival_rate = 30.0;
  double us_tie_probability = 0.3;
  double size_ratio = 0.6;
  int min_affiliate_count = 0;
};

struct InferenceConfig {
  NullVariant null_variant = NullVariant::global;
  std::string statistic = "group_mean_difference";  // or mean_outcome
  bool two_sided = false;
  // Zero-based here; one-based in the file. Empty means first / second half.
  std::vector<std::size_t> group_a;
  std::vector<std::size_t> group_b;
  std::size_t resamples = 199;
  std::filesystem::path history;
};

struct LemmaConfig {
  std::string instance = "all";
  std::size_t depth = 3;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t replications = 1;
  ScenarioConfig scenario;
  ModelSpec model;
  std::size_t node_limit = MultipleKnapsack{}.node_limit;
  // Posterior draws used to calibrate theta0 from case outcomes.
  std::size_t calibration_draws = 1000;
  InferenceConfig inference;
  BoundSpec bound{4, 2, 100};
  LemmaConfig lemmas;
};

// Unknown sections or keys and malformed values throw ConfigError naming the
// line. Relative paths resolve against `base_dir`.
RunConfig load_config(const IniFile& ini, const std::filesystem::path& base_dir = {});
// Every key with its effective value; load_config of the output gives back
// the same configuration.
void write_config(std::ostream& out, const RunConfig& config);

FeasibleSet make_feasible_set(const ScenarioConfig& scenario, std::size_t node_limit);
TypeStructure make_type_structure(const ScenarioConfig& scenario, const FeasibleSet& set);

}  // namespace combibandit
