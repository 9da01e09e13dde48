#include "combibandit/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace combibandit {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw std::invalid_argument("'" + text + "' is not a valid number");
  }
  return value;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("'" + text + "' is not a boolean");
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_number<T>(trim(item)));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::vector<std::size_t> parse_one_based(const std::string& text) {
  auto raw = parse_list<std::size_t>(text);
  for (auto& x : raw) {
    if (x == 0) throw std::invalid_argument("option indices are one-based");
    --x;
  }
  return raw;
}

std::string join_one_based(std::vector<std::size_t> v) {
  for (auto& x : v) ++x;
  return join(v);
}

std::string opt_double(const std::optional<double>& x) { return x ? format_double(*x) : ""; }
std::optional<double> parse_opt_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_number<double>(s);
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CB_NUM(sec, key, field, T)                                                       \
  Key {                                                                                   \
    sec, #key,                                                                            \
        [](RunConfig& c, const std::string& v, const std::filesystem::path&) {            \
          c.field = parse_number<T>(v);                                                   \
        },                                                                                \
        [](const RunConfig& c) {                                                          \
          if constexpr (std::is_floating_point_v<T>) return format_double(c.field);       \
          else return std::to_string(c.field);                                            \
        }                                                                                 \
  }
#define CB_BOOL(sec, key, field)                                                                   \
  Key {                                                                                            \
    sec, #key,                                                                                     \
        [](RunConfig& c, const std::string& v, const std::filesystem::path&) { c.field = parse_bool(v); }, \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }                 \
  }
#define CB_PATH(sec, key, field)                                                                      \
  Key {                                                                                               \
    sec, #key,                                                                                        \
        [](RunConfig& c, const std::string& v, const std::filesystem::path& base) {                   \
          std::filesystem::path p(v);                                                                 \
          c.field = (v.empty() || p.is_absolute() || base.empty()) ? p : base / p;                    \
        },                                                                                            \
        [](const RunConfig& c) { return c.field.string(); }                                          \
  }

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = {
      CB_NUM("run", seed, seed, std::uint64_t),
      CB_NUM("run", replications, replications, std::size_t),

      {"scenario", "set",
       [](RunConfig& c, const std::string& v, const auto&) {
         if (v != "top_m" && v != "assignment" && v != "capacitated" && v != "knapsack") {
           throw std::invalid_argument("unknown feasible set '" + v + "'");
         }
         c.scenario.set = v;
       },
       [](const RunConfig& c) { return c.scenario.set; }},
      CB_NUM("scenario", d, scenario.d, std::size_t),
      CB_NUM("scenario", m, scenario.m, std::size_t),
      CB_NUM("scenario", k, scenario.k, std::size_t),
      CB_NUM("scenario", items, scenario.items, std::size_t),
      {"scenario", "capacities",
       [](RunConfig& c, const std::string& v, const auto&) { c.scenario.capacities = parse_list<int>(v); },
       [](const RunConfig& c) { return join(c.scenario.capacities); }},
      {"scenario", "weights",
       [](RunConfig& c, const std::string& v, const auto&) { c.scenario.weights = parse_list<int>(v); },
       [](const RunConfig& c) { return join(c.scenario.weights); }},
      {"scenario", "types",
       [](RunConfig& c, const std::string& v, const auto&) {
         if (v != "auto" && v != "identity" && v != "grid") {
           throw std::invalid_argument("types must be auto, identity or grid");
         }
         c.scenario.types = v;
       },
       [](const RunConfig& c) { return c.scenario.types; }},
      {"scenario", "theta0",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.scenario.theta0 = v == "uniform" ? std::vector<double>{} : parse_list<double>(v);
       },
       [](const RunConfig& c) {
         return c.scenario.theta0.empty() ? std::string("uniform") : join(c.scenario.theta0);
       }},
      {"scenario", "outcome",
       [](RunConfig& c, const std::string& v, const auto&) { c.scenario.outcome = parse_outcome_family(v); },
       [](const RunConfig& c) { return to_string(c.scenario.outcome); }},
      CB_NUM("scenario", sigma_sq, scenario.sigma_sq, double),
      CB_NUM("scenario", dispersion, scenario.dispersion, double),
      CB_NUM("scenario", y_bar, scenario.y_bar, int),
      CB_NUM("scenario", horizon, scenario.horizon, std::size_t),
      CB_PATH("scenario", cases, scenario.cases),
      CB_PATH("scenario", affiliates, scenario.affiliates),
      CB_PATH("scenario", theta0_file, scenario.theta0_file),
      CB_NUM("scenario", months, scenario.months, std::size_t),
      CB_NUM("scenario", k_u, scenario.k_u, std::size_t),
      CB_NUM("scenario", k_v, scenario.k_v, std::size_t),
      CB_NUM("scenario", arrival_rate, scenario.arrival_rate, double),
      CB_NUM("scenario", us_tie_probability, scenario.us_tie_probability, double),
      CB_NUM("scenario", size_ratio, scenario.size_ratio, double),
      CB_NUM("scenario", min_affiliate_count, scenario.min_affiliate_count, int),

      {"model", "family",
       [](RunConfig& c, const std::string& v, const auto&) { c.model.family = parse_model_family(v); },
       [](const RunConfig& c) { return to_string(c.model.family); }},
      CB_NUM("model", prior_alpha, model.prior_alpha, double),
      CB_NUM("model", prior_beta, model.prior_beta, double),
      CB_BOOL("model", row_effects, model.hierarchical.row_effects),
      CB_BOOL("model", col_effects, model.hierarchical.col_effects),
      CB_NUM("model", mu_sd, model.hierarchical.mu_sd, double),
      CB_NUM("model", tau_scale, model.hierarchical.tau_scale, double),
      CB_NUM("model", sigma_scale, model.hierarchical.sigma_scale, double),
      CB_NUM("model", dispersion_log_mean, model.hierarchical.dispersion_log_mean, double),
      CB_NUM("model", dispersion_log_sd, model.hierarchical.dispersion_log_sd, double),
      {"model", "fixed_dispersion",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.model.hierarchical.fixed_dispersion = parse_opt_double(v);
       },
       [](const RunConfig& c) { return opt_double(c.model.hierarchical.fixed_dispersion); }},
      CB_NUM("model", refresh_every, model.refresh_every, std::size_t),

      CB_NUM("mcmc", warmup, model.mcmc.warmup, std::size_t),
      CB_NUM("mcmc", thin, model.mcmc.thin, std::size_t),
      CB_NUM("mcmc", target_accept, model.mcmc.target_accept, double),
      CB_NUM("mcmc", calibration_draws, calibration_draws, std::size_t),

      CB_NUM("solver", node_limit, node_limit, std::size_t),

      {"inference", "null",
       [](RunConfig& c, const std::string& v, const auto&) { c.inference.null_variant = parse_null_variant(v); },
       [](const RunConfig& c) { return to_string(c.inference.null_variant); }},
      {"inference", "statistic",
       [](RunConfig& c, const std::string& v, const auto&) {
         if (v != "group_mean_difference" && v != "mean_outcome") {
           throw std::invalid_argument("unknown statistic '" + v + "'");
         }
         c.inference.statistic = v;
       },
       [](const RunConfig& c) { return c.inference.statistic; }},
      CB_BOOL("inference", two_sided, inference.two_sided),
      {"inference", "group_a",
       [](RunConfig& c, const std::string& v, const auto&) { c.inference.group_a = parse_one_based(v); },
       [](const RunConfig& c) { return join_one_based(c.inference.group_a); }},
      {"inference", "group_b",
       [](RunConfig& c, const std::string& v, const auto&) { c.inference.group_b = parse_one_based(v); },
       [](const RunConfig& c) { return join_one_based(c.inference.group_b); }},
      CB_NUM("inference", resamples, inference.resamples, std::size_t),
      CB_PATH("inference", history, inference.history),

      CB_NUM("bound", d, bound.d, std::size_t),
      CB_NUM("bound", m, bound.m, std::size_t),
      CB_NUM("bound", horizon, bound.horizon, std::size_t),

      {"lemmas", "instance",
       [](RunConfig& c, const std::string& v, const auto&) { c.lemmas.instance = v; },
       [](const RunConfig& c) { return c.lemmas.instance; }},
      CB_NUM("lemmas", depth, lemmas.depth, std::size_t),
  };
  return keys;
}

#undef CB_NUM
#undef CB_BOOL
#undef CB_PATH

}  // namespace

IniFile IniFile::parse(std::istream& in, std::string source) {
  IniFile ini;
  ini.source = std::move(source);
  std::string current;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError(ini.source + ":" + std::to_string(line_no) + ": " + what);
  };
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto cut = raw.find_first_of("#;");
    const std::string line = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      current = trim(line.substr(1, line.size() - 2));
      if (current.empty()) fail("empty section name");
      ini.sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    if (current.empty()) fail("key outside any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail("empty key");
    auto& sec = ini.sections[current];
    if (sec.count(key)) fail("duplicate key '" + key + "' in [" + current + "]");
    sec[key] = Entry{trim(line.substr(eq + 1)), line_no};
  }
  return ini;
}

IniFile IniFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in, path.string());
}

void IniFile::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  sections[trim(assignment.substr(0, dot))][trim(assignment.substr(dot + 1, eq - dot - 1))] =
      Entry{trim(assignment.substr(eq + 1)), 0};
}

RunConfig load_config(const IniFile& ini, const std::filesystem::path& base_dir) {
  RunConfig config;
  for (const auto& [section, entries] : ini.sections) {
    for (const auto& [key, entry] : entries) {
      const std::string where = ini.source + (entry.line ? ":" + std::to_string(entry.line) : "") +
                                ": [" + section + "] " + key;
      const auto& keys = schema();
      auto it = std::find_if(keys.begin(), keys.end(),
                             [&](const Key& k) { return k.section == section && k.name == key; });
      if (it == keys.end()) {
        const bool known_section = std::any_of(keys.begin(), keys.end(),
                                               [&](const Key& k) { return k.section == section; });
        throw ConfigError(where + ": unknown " + (known_section ? "key" : "section"));
      }
      try {
        it->set(config, entry.value, base_dir);
      } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
      }
    }
  }
  if (config.replications < 1) throw ConfigError("[run] replications must be at least 1");
  return config;
}

void write_config(std::ostream& out, const RunConfig& config) {
  std::string section;
  for (const auto& key : schema()) {
    if (key.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << key.section << "]\n";
      section = key.section;
    }
    out << key.name << " = " << key.get(config) << '\n';
  }
}

FeasibleSet make_feasible_set(const ScenarioConfig& s, std::size_t node_limit) {
  FeasibleSet set;
  if (s.set == "top_m") {
    set = TopM{s.d, s.m};
  } else if (s.set == "assignment") {
    set = Assignment{s.k};
  } else if (s.set == "capacitated") {
    set = Capacitated{s.items, s.capacities};
  } else if (s.set == "knapsack") {
    set = MultipleKnapsack{s.weights, s.capacities, node_limit};
  } else {
    throw ConfigError("unknown feasible set '" + s.set + "'");
  }
  try {
    check_feasible_set(set);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[scenario]: ") + e.what());
  }
  return set;
}

TypeStructure make_type_structure(const ScenarioConfig& s, const FeasibleSet& set) {
  const std::size_t d = option_count(set);
  std::string kind = s.types;
  if (kind == "auto") kind = s.set == "top_m" ? "identity" : "grid";
  if (kind == "identity") return TypeStructure::identity(d);
  if (s.set == "assignment") return TypeStructure::grid(s.k, s.k);
  if (s.set == "capacitated") return TypeStructure::grid(s.items, s.capacities.size());
  if (s.set == "knapsack") return TypeStructure::grid(s.weights.size(), s.capacities.size());
  throw ConfigError("[scenario] types = grid needs an assignment, capacitated or knapsack set");
}

}  // namespace combibandit
