#include "combibandit/inference.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "combibandit/engine.hpp"
#include "parallel.hpp"

namespace combibandit {

std::string to_string(NullVariant variant) {
  switch (variant) {
    case NullVariant::row: return "row";
    case NullVariant::column: return "column";
    case NullVariant::global: return "global";
  }
  return "global";
}

NullVariant parse_null_variant(std::string_view name) {
  if (name == "row") return NullVariant::row;
  if (name == "column") return NullVariant::column;
  if (name == "global") return NullVariant::global;
  throw std::invalid_argument("unknown null variant: " + std::string(name));
}

namespace {

struct Realized {
  std::size_t option;
  double value;
};

std::vector<Realized> realized_in(const HistoryRecord& rec) {
  std::vector<Realized> out;
  for (std::size_t j = 0; j < rec.outcomes.size(); ++j) {
    if (rec.outcomes.observed(j)) out.push_back({j, *rec.outcomes[j]});
  }
  return out;
}

double pick(const std::vector<double>& pool, Rng& rng) {
  if (pool.size() == 1) return pool[0];
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  return pool[dist(rng)];
}

}  // namespace

OutcomeVector impute_outcomes(const NullSpec& null, const History& observed, std::size_t period_index,
                              const ActionVector& action, const TypeStructure& types, Rng& rng) {
  if (period_index >= observed.size()) throw std::out_of_range("period outside the history");
  const auto here = realized_in(observed[period_index]);
  const auto chosen = action.selected();
  std::vector<std::optional<double>> values(action.size());

  auto all_history = [&](auto&& keep) {
    std::vector<double> pool;
    for (const auto& rec : observed.records()) {
      for (const auto& r : realized_in(rec)) {
        if (keep(r.option)) pool.push_back(r.value);
      }
    }
    return pool;
  };
  auto fallback = [&](auto&& keep) {
    auto pool = all_history(keep);
    if (pool.empty()) {
      for (const auto& r : here) pool.push_back(r.value);
    }
    if (pool.empty()) pool = all_history([](std::size_t) { return true; });
    if (pool.empty()) throw std::invalid_argument("history has no observed outcomes to impute from");
    return pick(pool, rng);
  };

  if (null.variant == NullVariant::global) {
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      values[chosen[i]] = i < here.size() ? here[i].value
                                          : fallback([](std::size_t) { return true; });
    }
    return OutcomeVector(std::move(values));
  }

  const bool by_row = null.variant == NullVariant::row;
  auto type_of = [&](std::size_t j) { return by_row ? types.u_of(j) : types.v_of(j); };
  for (std::size_t j : chosen) {
    const std::size_t want = type_of(j);
    std::vector<double> pool;
    for (const auto& r : here) {
      if (type_of(r.option) == want) pool.push_back(r.value);
    }
    values[j] = pool.empty() ? fallback([&](std::size_t o) { return type_of(o) == want; })
                             : pick(pool, rng);
  }
  return OutcomeVector(std::move(values));
}

Statistic group_mean_difference(std::vector<std::size_t> a, std::vector<std::size_t> b) {
  return [a = std::move(a), b = std::move(b)](const History& h) {
    auto mean_of = [&](const std::vector<std::size_t>& group) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& rec : h.records()) {
        for (std::size_t j : group) {
          if (j < rec.outcomes.size() && rec.outcomes.observed(j)) {
            sum += *rec.outcomes[j];
            ++n;
          }
        }
      }
      return n == 0 ? 0.0 : sum / static_cast<double>(n);
    };
    return mean_of(a) - mean_of(b);
  };
}

Statistic mean_outcome() {
  return [](const History& h) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& rec : h.records()) {
      for (const auto& v : rec.outcomes.values()) {
        if (v) {
          sum += *v;
          ++n;
        }
      }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
  };
}

Statistic absolute(Statistic s) {
  return [s = std::move(s)](const History& h) { return std::abs(s(h)); };
}

double permutation_p_value(double observed, const std::vector<double>& resamples) {
  // Floating-point noise should not break ties between equal statistics.
  const double slack = 1e-12 * (1.0 + std::abs(observed));
  std::size_t at_least = 0;
  for (double r : resamples) {
    if (r >= observed - slack) ++at_least;
  }
  return static_cast<double>(1 + at_least) / static_cast<double>(1 + resamples.size());
}

TestResult randomization_test(const History& observed, const ModelSpec& spec,
                              const FeasibleSet& set, const TypeStructure& types,
                              const NullSpec& null, const Statistic& statistic,
                              std::size_t n_resamples, std::uint64_t seed) {
  const std::size_t d = option_count(set);
  if (types.options() != d) {
    throw std::invalid_argument("feasible set and type structure differ in option count");
  }
  for (const auto& rec : observed.records()) {
    if (rec.action.size() != d || rec.outcomes.size() != d) {
      throw std::invalid_argument("history does not match the feasible set dimension");
    }
    if (!is_feasible(set, rec.action)) {
      throw std::invalid_argument("history contains an action outside the feasible set");
    }
  }

  TestResult result;
  result.variant = null.variant;
  result.observed = statistic(observed);
  result.resamples.assign(n_resamples, 0.0);
  detail::parallel_for(n_resamples, [&](std::size_t r) {
    const std::uint64_t s = derive_seed(seed, r);
    Rng policy = make_rng(s, 0);
    Rng impute = make_rng(s, 2);
    auto model = make_model(spec, types.k_u(), types.k_v());
    History tilde;
    for (std::size_t t = 0; t < observed.size(); ++t) {
      auto choice = thompson_step(*model, set, types, policy);
      auto y = impute_outcomes(null, observed, t, choice.action, types, impute);
      std::vector<Observation> obs;
      for (std::size_t j : choice.action.selected()) obs.push_back({types.cell_of(j), *y[j]});
      model->observe(obs);
      tilde.append(std::move(choice.action), std::move(y));
    }
    result.resamples[r] = statistic(tilde);
  });
  result.p_value = permutation_p_value(result.observed, result.resamples);
  return result;
}

void write_test_report(std::ostream& out, const TestResult& result) {
  out << "null=" << to_string(result.variant) << '\n'
      << "observed=" << format_double(result.observed) << '\n'
      << "resamples=" << result.resamples.size() << '\n'
      << "p_value=" << format_double(result.p_value) << '\n';
}

void write_resamples_csv(std::ostream& out, const TestResult& result) {
  out << "resample_index,statistic\n";
  for (std::size_t r = 0; r < result.resamples.size(); ++r) {
    out << (r + 1) << ',' << format_double(result.resamples[r]) << '\n';
  }
}

}  // namespace combibandit
