#include "combibandit/cli.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "combibandit/cases.hpp"
#include "combibandit/config.hpp"
#include "combibandit/inference.hpp"
#include "combibandit/metrics.hpp"
#include "json.hpp"

#ifndef COMBIBANDIT_VERSION
#define COMBIBANDIT_VERSION "0.0.0"
#endif

namespace combibandit {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string to_string(Command command) {
  switch (command) {
    case Command::simulate: return "simulate";
    case Command::resettle: return "resettle";
    case Command::bound: return "bound";
    case Command::lemmas: return "lemmas";
    case Command::infer: return "infer";
  }
  return "bound";
}

Command parse_command(std::string_view name) {
  for (auto c : {Command::simulate, Command::resettle, Command::bound, Command::lemmas,
                 Command::infer}) {
    if (name == to_string(c)) return c;
  }
  throw std::invalid_argument("unknown command: " + std::string(name));
}

namespace {

// Raised for problems with the user's input rather than the run itself.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  template <class Writer>
  void write(const std::string& name, Writer&& writer) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    writer(out);
    if (!out) throw std::runtime_error("error while writing " + (dir_ / name).string());
    files_.push_back(name);
  }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

struct Context {
  RunConfig config;
  Outputs& out;
  std::ostream& log;
  json summary = json::object();
  bool passed = true;
};

ModelSpec model_spec(const RunConfig& c) {
  ModelSpec spec = c.model;
  spec.hierarchical.y_bar = c.scenario.y_bar;
  return spec;
}

ThetaVector bandit_theta0(const RunConfig& c, std::size_t d) {
  if (c.scenario.theta0.empty()) {
    Rng rng = make_rng(c.seed, 3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> theta(d);
    for (auto& x : theta) x = unif(rng);
    return ThetaVector(std::move(theta));
  }
  if (c.scenario.theta0.size() != d) {
    throw InputError("[scenario] theta0 has " + std::to_string(c.scenario.theta0.size()) +
                     " entries, the feasible set has " + std::to_string(d) + " options");
  }
  return ThetaVector(c.scenario.theta0);
}

struct Bandit {
  FeasibleSet set;
  TypeStructure types;
  Environment env;
};

Bandit make_bandit(const RunConfig& c) {
  Bandit b;
  b.set = make_feasible_set(c.scenario, c.node_limit);
  b.types = make_type_structure(c.scenario, b.set);
  b.env.theta0 = bandit_theta0(c, option_count(b.set));
  b.env.family = c.scenario.outcome;
  b.env.sigma_sq = c.scenario.sigma_sq;
  b.env.dispersion = c.scenario.dispersion;
  b.env.y_bar = c.scenario.y_bar;
  return b;
}

bool fixed_batch(const FeasibleSet& set) {
  return !std::holds_alternative<MultipleKnapsack>(set) && !std::holds_alternative<Explicit>(set);
}

void write_theta0(Outputs& out, const ThetaVector& theta) {
  out.write("theta0.csv", [&](std::ostream& os) {
    os << "option_index,theta\n";
    for (std::size_t j = 0; j < theta.size(); ++j) os << (j + 1) << ',' << format_double(theta[j]) << '\n';
  });
}

void run_simulate(Context& ctx) {
  const auto& c = ctx.config;
  auto b = make_bandit(c);
  const auto spec = model_spec(c);
  write_theta0(ctx.out, b.env.theta0);
  ctx.log << "simulate: " << family_name(b.set) << " with " << option_count(b.set) << " options, "
          << c.replications << " replications of " << c.scenario.horizon << " periods\n";

  const auto curves = replicate_regret(b.env, spec, b.set, b.types, c.scenario.horizon,
                                       c.replications, c.seed);
  const auto summary = summarize_regret(curves);
  const bool with_bound = fixed_batch(b.set) && batch_size(b.set) >= 1;
  const BoundSpec bound{option_count(b.set), batch_size(b.set), std::max<std::size_t>(c.scenario.horizon, 1)};
  ctx.out.write("regret.csv", [&](std::ostream& os) {
    os << "t,mean_cumulative_regret,std_error,theorem1_bound\n";
    for (std::size_t t = 0; t < summary.mean.size(); ++t) {
      os << (t + 1) << ',' << format_double(summary.mean[t]) << ',' << format_double(summary.std_error[t])
         << ',';
      if (with_bound) os << format_double(theorem1_bound(bound, t + 1));
      os << '\n';
    }
  });
  ctx.out.write("replications.csv", [&](std::ostream& os) {
    os << "replication,t,cumulative_regret\n";
    for (std::size_t r = 0; r < curves.size(); ++r) {
      for (std::size_t t = 0; t < curves[r].size(); ++t) {
        os << (r + 1) << ',' << (t + 1) << ',' << format_double(curves[r][t]) << '\n';
      }
    }
  });
  const auto traj = run_episode(b.env, spec, b.set, b.types, c.scenario.horizon, derive_seed(c.seed, 0));
  ctx.out.write("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, traj); });
  ctx.out.write("history.csv", [&](std::ostream& os) { write_history_csv(os, traj.history()); });

  if (!summary.mean.empty()) {
    ctx.summary["final_mean_regret"] = summary.mean.back();
    if (with_bound) ctx.summary["final_bound"] = theorem1_bound(bound, summary.mean.size());
  }
}

std::vector<double> calibrate_theta0(const RunConfig& c, const std::vector<CaseRecord>& cases,
                                     const CaseScenario& built, std::ostream& log) {
  const auto obs = employment_observations(cases, built);
  if (obs.empty()) {
    throw InputError("no theta0_file given and no case reports employment at a known affiliate");
  }
  const auto types = TypeStructure::grid(built.scenario.k_u, built.scenario.k_v());
  Rng rng = make_rng(c.seed, 5);
  const auto draws = mcmc_sample(ModelFamily::logit_hier, obs, types, c.model.hierarchical,
                                 c.calibration_draws, c.model.mcmc, rng);
  std::vector<double> mean(types.options(), 0.0);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const auto th = draws.theta(i);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += th[j];
  }
  for (auto& x : mean) x /= static_cast<double>(draws.size());
  log << "resettle: calibrated theta0 from " << obs.size() << " employment outcomes\n";
  return mean;
}

void run_resettle(Context& ctx) {
  const auto& c = ctx.config;
  const auto& sc = c.scenario;
  ResettlementScenario scenario;
  std::vector<int> affiliate_ids;
  if (!sc.cases.empty()) {
    if (sc.affiliates.empty()) throw InputError("[scenario] cases needs an affiliates file");
    const auto cases = ingest_cases(sc.cases);
    std::ifstream af(sc.affiliates);
    if (!af) throw InputError("cannot open " + sc.affiliates.string());
    const auto affiliates = read_affiliates(af, sc.affiliates.string());
    auto built = build_case_scenario(cases, affiliates, sc.min_affiliate_count);
    if (!sc.theta0_file.empty()) {
      std::ifstream tf(sc.theta0_file);
      if (!tf) throw InputError("cannot open " + sc.theta0_file.string());
      built.scenario.theta0 = read_theta0(tf, built.affiliate_ids, sc.theta0_file.string());
    } else {
      built.scenario.theta0 = calibrate_theta0(c, cases, built, ctx.log);
    }
    ctx.summary["dropped_cases"] = built.dropped_cases;
    scenario = std::move(built.scenario);
    affiliate_ids = std::move(built.affiliate_ids);
  } else {
    scenario = generate_synthetic_scenario(sc.k_u, sc.k_v, sc.months, sc.arrival_rate,
                                           derive_seed(c.seed, 4),
                                           SyntheticOptions{sc.us_tie_probability, sc.size_ratio});
    for (std::size_t v = 0; v < scenario.k_v(); ++v) affiliate_ids.push_back(static_cast<int>(v + 1));
  }
  try {
    scenario.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  ctx.log << "resettle: " << scenario.families.size() << " families, " << scenario.k_v()
          << " affiliates, " << scenario.months << " months\n";

  if (scenario.k_u <= kCaseTypes) {
    ctx.out.write("families.csv", [&](std::ostream& os) {
      auto cases = scenario_cases(scenario);
      for (auto& rec : cases) {
        if (rec.tied_affiliate) rec.tied_affiliate = affiliate_ids[*rec.tied_affiliate - 1];
      }
      write_cases(os, cases);
    });
  }
  ctx.out.write("affiliates.csv", [&](std::ostream& os) {
    os << "affiliate_id,annual_count\n";
    for (std::size_t v = 0; v < scenario.k_v(); ++v) {
      os << affiliate_ids[v] << ',' << scenario.affiliates[v].annual_count << '\n';
    }
  });
  ctx.out.write("theta0.csv", [&](std::ostream& os) {
    os << "u_type,affiliate_id,theta\n";
    for (std::size_t u = 0; u < scenario.k_u; ++u) {
      for (std::size_t v = 0; v < scenario.k_v(); ++v) {
        os << u << ',' << affiliate_ids[v] << ',' << format_double(scenario.theta0[u * scenario.k_v() + v])
           << '\n';
      }
    }
  });

  const auto result = run_resettlement(scenario, model_spec(c), c.seed, ResettlementOptions{c.node_limit});
  ctx.out.write("placements.csv", [&](std::ostream& os) { write_placements_csv(os, result); });
  ctx.out.write("summary.csv", [&](std::ostream& os) { write_resettlement_summary_csv(os, result); });

  const auto check = validate_resettlement(scenario, result);
  const bool conserved = check_conservation(result);
  std::size_t unproven = 0;
  for (const auto& m : result.months) unproven += m.solver_proven ? 0 : 1;
  ctx.summary["validator"] = check.ok ? "pass" : "fail";
  ctx.summary["violations"] = check.violations;
  ctx.summary["conservation"] = conserved ? "pass" : "fail";
  ctx.summary["months_at_node_limit"] = unproven;
  if (!result.months.empty()) ctx.summary["final_cumulative_regret"] = result.cumulative_regret().back();
  if (unproven > 0) {
    ctx.log << "resettle: " << unproven << " month(s) hit the solver node limit\n";
  }
  ctx.passed = check.ok && conserved;
}

void run_bound(Context& ctx) {
  const auto& b = ctx.config.bound;
  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("[bound] ") + e.what());
  }
  ctx.out.write("bound.csv", [&](std::ostream& os) { write_bound_curve_csv(os, b); });
  ctx.summary["final_bound"] = theorem1_bound(b, b.horizon);
}

void run_lemmas(Context& ctx) {
  const auto& lc = ctx.config.lemmas;
  std::vector<DiscretePriorInstance> chosen;
  for (auto& inst : packaged_lemma_instances()) {
    if (lc.instance == "all" || lc.instance == inst.name) chosen.push_back(std::move(inst));
  }
  if (chosen.empty()) throw InputError("[lemmas] unknown instance '" + lc.instance + "'");
  std::vector<LemmaReport> reports;
  for (const auto& inst : chosen) {
    reports.push_back(verify_lemma_properties(inst, lc.depth));
    ctx.log << "lemmas: " << inst.name << " " << (reports.back().ok() ? "pass" : "fail") << " ("
            << reports.back().nodes << " nodes)\n";
    ctx.summary[inst.name] = reports.back().ok() ? "pass" : "fail";
    ctx.passed = ctx.passed && reports.back().ok();
  }
  ctx.out.write("lemmas.txt", [&](std::ostream& os) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (i) os << '\n';
      write_lemma_report(os, reports[i]);
    }
  });
}

void run_infer(Context& ctx) {
  const auto& c = ctx.config;
  auto b = make_bandit(c);
  const auto spec = model_spec(c);
  const std::size_t d = option_count(b.set);
  History history;
  if (!c.inference.history.empty()) {
    std::ifstream in(c.inference.history);
    if (!in) throw InputError("cannot open " + c.inference.history.string());
    try {
      history = read_history_csv(in);
    } catch (const std::exception& e) {
      throw InputError(c.inference.history.string() + ": " + e.what());
    }
  } else {
    write_theta0(ctx.out, b.env.theta0);
    history = run_episode(b.env, spec, b.set, b.types, c.scenario.horizon, derive_seed(c.seed, 0))
                  .history();
    ctx.out.write("history.csv", [&](std::ostream& os) { write_history_csv(os, history); });
  }

  Statistic stat;
  if (c.inference.statistic == "mean_outcome") {
    stat = mean_outcome();
  } else {
    auto a = c.inference.group_a;
    auto g = c.inference.group_b;
    if (a.empty() && g.empty()) {
      for (std::size_t j = 0; j < d; ++j) (j < d / 2 ? a : g).push_back(j);
    }
    for (auto j : a) if (j >= d) throw InputError("[inference] group_a names an option beyond d");
    for (auto j : g) if (j >= d) throw InputError("[inference] group_b names an option beyond d");
    stat = group_mean_difference(a, g);
  }
  if (c.inference.two_sided) stat = absolute(stat);

  TestResult result;
  try {
    result = randomization_test(history, spec, b.set, b.types, NullSpec{c.inference.null_variant}, stat,
                                c.inference.resamples, derive_seed(c.seed, 1));
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  ctx.out.write("test_report.txt", [&](std::ostream& os) { write_test_report(os, result); });
  ctx.out.write("resamples.csv", [&](std::ostream& os) { write_resamples_csv(os, result); });
  ctx.summary["observed"] = result.observed;
  ctx.summary["p_value"] = result.p_value;
  ctx.log << "infer: p = " << format_double(result.p_value) << '\n';
}

void report_error(std::ostream& err, const RunManifest& m, const std::string& kind,
                  const std::string& message) {
  json j;
  j["error"] = kind;
  j["command"] = to_string(m.command);
  j["message"] = message;
  err << j.dump() << '\n';
}

}  // namespace

int run_command(const RunManifest& manifest, std::ostream& log, std::ostream& err) {
  RunConfig config;
  std::string config_text;
  try {
    IniFile ini;
    if (!manifest.config_path.empty()) {
      std::ifstream in(manifest.config_path, std::ios::binary);
      if (!in) throw ConfigError("cannot open config file " + manifest.config_path.string());
      config_text.assign(std::istreambuf_iterator<char>(in), {});
      std::istringstream text(config_text);
      ini = IniFile::parse(text, manifest.config_path.string());
    }
    for (const auto& o : manifest.overrides) ini.apply_override(o);
    config = load_config(ini, manifest.config_path.empty() ? fs::path{}
                                                           : manifest.config_path.parent_path());
    if (manifest.seed) config.seed = *manifest.seed;
    if (manifest.replications) {
      if (*manifest.replications < 1) throw ConfigError("--reps must be at least 1");
      config.replications = *manifest.replications;
    }
  } catch (const std::exception& e) {
    report_error(err, manifest, "config", e.what());
    return kExitBadInput;
  }

  try {
    Outputs outputs(manifest.output_dir);
    Context ctx{config, outputs, log};
    outputs.write("config.ini", [&](std::ostream& os) { write_config(os, config); });
    switch (manifest.command) {
      case Command::simulate: run_simulate(ctx); break;
      case Command::resettle: run_resettle(ctx); break;
      case Command::bound: run_bound(ctx); break;
      case Command::lemmas: run_lemmas(ctx); break;
      case Command::infer: run_infer(ctx); break;
    }

    json j;
    j["tool"] = "combibandit";
    j["version"] = COMBIBANDIT_VERSION;
    j["command"] = to_string(manifest.command);
    j["config_path"] = manifest.config_path.string();
    j["config_hash"] = manifest.config_path.empty() ? json(nullptr) : json("fnv1a64:" + fnv1a64(config_text));
    j["overrides"] = manifest.overrides;
    j["seed"] = config.seed;
    j["replications"] = config.replications;
    j["resolved_config"] = "config.ini";
    j["outputs"] = outputs.files();
    j["status"] = ctx.passed ? "pass" : "fail";
    j["summary"] = ctx.summary;
    std::ofstream mf(manifest.output_dir / "manifest.json", std::ios::binary);
    mf << j.dump(2) << '\n';
    if (!mf) throw std::runtime_error("cannot write manifest.json");
    return ctx.passed ? kExitOk : kExitCheckFailed;
  } catch (const InputError& e) {
    report_error(err, manifest, "input", e.what());
    return kExitBadInput;
  } catch (const ConfigError& e) {
    report_error(err, manifest, "config", e.what());
    return kExitBadInput;
  } catch (const CaseFormatError& e) {
    report_error(err, manifest, "input", e.what());
    return kExitBadInput;
  } catch (const std::exception& e) {
    report_error(err, manifest, "runtime", e.what());
    return kExitRuntime;
  }
}

}  // namespace combibandit
