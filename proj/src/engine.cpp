#include "combibandit/engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "parallel.hpp"

namespace combibandit {

std::string to_string(OutcomeFamily family) {
  switch (family) {
    case OutcomeFamily::bernoulli: return "bernoulli";
    case OutcomeFamily::gaussian_truncated: return "gaussian_truncated";
    case OutcomeFamily::beta_binomial: return "beta_binomial";
  }
  return "unknown";
}

OutcomeFamily parse_outcome_family(std::string_view name) {
  if (name == "bernoulli") return OutcomeFamily::bernoulli;
  if (name == "gaussian_truncated") return OutcomeFamily::gaussian_truncated;
  if (name == "beta_binomial") return OutcomeFamily::beta_binomial;
  throw std::invalid_argument("unknown outcome family '" + std::string(name) + "'");
}

std::vector<double> Environment::draw(Rng& rng) const {
  std::uniform_real_distribution<double> unif;
  std::vector<double> y(theta0.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double th = theta0[j];
    switch (family) {
      case OutcomeFamily::bernoulli:
        y[j] = unif(rng) < th ? 1.0 : 0.0;
        break;
      case OutcomeFamily::gaussian_truncated: {
        std::normal_distribution<double> z(th, std::sqrt(sigma_sq));
        double v = z(rng);
        for (int tries = 0; (v < 0.0 || v > 1.0) && tries < 10000; ++tries) v = z(rng);
        y[j] = std::clamp(v, 0.0, 1.0);
        break;
      }
      case OutcomeFamily::beta_binomial: {
        if (y_bar < 1) throw std::invalid_argument("y_bar must be a positive integer");
        if (th <= 0.0 || th >= 1.0) {
          y[j] = th;
          break;
        }
        const double p = sample_beta(dispersion * th, dispersion * (1.0 - th), rng);
        std::binomial_distribution<int> bin(y_bar, p);
        y[j] = static_cast<double>(bin(rng)) / y_bar;
        break;
      }
    }
  }
  return y;
}

ThompsonChoice thompson_step(PosteriorModel& model, const FeasibleSet& set,
                             const TypeStructure& types, Rng& rng) {
  if (option_count(set) != types.options()) {
    throw std::invalid_argument("feasible set and type structure differ in option count");
  }
  if (model.cells() != types.cells()) {
    throw std::invalid_argument("model and type structure disagree on the cell count");
  }
  ThompsonChoice out;
  out.theta_hat = types.broadcast(model.draw_cells(rng));
  const auto clipped = ThetaVector::clipped(out.theta_hat);
  auto sol = solve(set, clipped.span());
  out.action = std::move(sol.action);
  out.unassigned = std::move(sol.unassigned);
  out.proven_optimal = sol.proven_optimal;
  return out;
}

ThompsonChoice thompson_step(const ModelSpec& spec, const History& history,
                             const FeasibleSet& set, const TypeStructure& types, Rng& rng) {
  auto model = make_model(spec, types.k_u(), types.k_v());
  model->observe(history.observations(types));
  return thompson_step(*model, set, types, rng);
}

OracleResult oracle_action(const ThetaVector& theta0, const FeasibleSet& set) {
  auto sol = solve(set, theta0.span());
  return {std::move(sol.action), sol.value};
}

std::vector<double> Trajectory::cumulative_regret() const {
  std::vector<double> out;
  double total = 0.0;
  for (const auto& p : periods) out.push_back(total += p.expected_regret);
  return out;
}

History Trajectory::history() const {
  History h;
  for (const auto& p : periods) h.append_record(HistoryRecord{p.period, p.action, p.outcomes});
  return h;
}

namespace {

// Rounding can leave a tie with the oracle a hair below zero.
double regret_of(double oracle_value, double value) {
  const double r = oracle_value - value;
  return (r < 0.0 && r > -1e-12) ? 0.0 : r;
}

template <class Outcomes>
Trajectory episode(const ModelSpec& spec, const FeasibleSet& set, const TypeStructure& types,
                   const ThetaVector& theta0, std::size_t horizon, std::uint64_t seed,
                   const EpisodeOptions& options, Outcomes&& next_outcomes) {
  if (option_count(set) != types.options() || theta0.size() != types.options()) {
    throw std::invalid_argument("feasible set, type structure and theta0 differ in size");
  }
  Trajectory traj;
  auto oracle = oracle_action(theta0, set);
  traj.oracle_action = oracle.action;
  traj.oracle_value = oracle.value;
  auto model = make_model(spec, types.k_u(), types.k_v());
  Rng policy = make_rng(seed, 0);
  traj.periods.reserve(horizon);
  for (std::size_t t = 1; t <= horizon; ++t) {
    auto choice = thompson_step(*model, set, types, policy);
    const std::vector<double> y = next_outcomes(t);
    if (y.size() != types.options()) throw std::invalid_argument("outcome row has wrong length");
    PeriodRecord rec;
    rec.period = t;
    rec.outcomes = OutcomeVector::observe(choice.action, y);
    std::vector<Observation> obs;
    for (auto j : choice.action.selected()) {
      obs.push_back({types.cell_of(j), y[j]});
      rec.realized_reward += y[j];
    }
    model->observe(obs);
    rec.expected_regret = regret_of(oracle.value, reward(choice.action, theta0));
    if (options.record_theta_hat) rec.theta_hat = std::move(choice.theta_hat);
    rec.action = std::move(choice.action);
    traj.periods.push_back(std::move(rec));
  }
  return traj;
}

}  // namespace

Trajectory run_episode(const Environment& env, const ModelSpec& spec, const FeasibleSet& set,
                       const TypeStructure& types, std::size_t horizon, std::uint64_t seed,
                       const EpisodeOptions& options) {
  Rng world = make_rng(seed, 1);
  return episode(spec, set, types, env.theta0, horizon, seed, options,
                 [&](std::size_t) { return env.draw(world); });
}

Trajectory run_episode_on_outcomes(const ModelSpec& spec, const FeasibleSet& set,
                                   const TypeStructure& types, const ThetaVector& theta0,
                                   const std::vector<std::vector<double>>& potential,
                                   std::uint64_t seed, const EpisodeOptions& options) {
  return episode(spec, set, types, theta0, potential.size(), seed, options,
                 [&](std::size_t t) { return potential[t - 1]; });
}

std::vector<std::vector<double>> replicate_regret(const Environment& env, const ModelSpec& spec,
                                                  const FeasibleSet& set,
                                                  const TypeStructure& types,
                                                  std::size_t horizon, std::size_t replications,
                                                  std::uint64_t base_seed) {
  std::vector<std::vector<double>> out(replications);
  detail::parallel_for(replications, [&](std::size_t r) {
    out[r] = run_episode(env, spec, set, types, horizon, derive_seed(base_seed, r),
                         EpisodeOptions{false})
                 .cumulative_regret();
  });
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "period,action,expected_regret,cumulative_regret,realized_reward\n";
  double cum = 0.0;
  for (const auto& p : trajectory.periods) {
    cum += p.expected_regret;
    out << p.period << ',';
    bool first = true;
    for (auto j : p.action.selected()) {
      out << (first ? "" : ";") << (j + 1);
      first = false;
    }
    out << ',' << format_double(p.expected_regret) << ',' << format_double(cum) << ','
        << format_double(p.realized_reward) << '\n';
  }
}

// ---------------------------------------------------------------------------

void ResettlementScenario::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("scenario: " + what); };
  if (months == 0) fail("months must be positive");
  if (k_u == 0) fail("k_u must be positive");
  if (affiliates.empty()) fail("no affiliates");
  for (const auto& a : affiliates) {
    if (a.annual_count < 0) fail("affiliate '" + a.name + "' has a negative annual count");
  }
  std::set<std::size_t> ids;
  for (const auto& f : families) {
    const std::string tag = "family " + std::to_string(f.id);
    if (!ids.insert(f.id).second) fail(tag + " appears twice");
    if (f.size < 1) fail(tag + " has a non-positive size");
    if (f.u_type >= k_u) fail(tag + " has u_type out of range");
    if (f.arrival_month < 1 || f.arrival_month > months) fail(tag + " arrives outside the horizon");
    if (f.us_tie != f.tied_affiliate.has_value()) {
      fail(tag + ": tied_affiliate must be given exactly when us_tie is set");
    }
    if (f.tied_affiliate && *f.tied_affiliate >= affiliates.size()) {
      fail(tag + " is tied to an unknown affiliate");
    }
  }
  if (!theta0.empty()) {
    if (theta0.size() != k_u * affiliates.size()) fail("theta0 needs one value per cell");
    for (double t : theta0) {
      if (!(t >= 0.0 && t <= 1.0)) fail("theta0 entries must lie in [0,1]");
    }
  }
}

int monthly_quota(int annual_count, std::size_t month) {
  if (annual_count < 0) throw std::invalid_argument("annual count must be nonnegative");
  if (month == 0) throw std::invalid_argument("months are one-based");
  const long long a = annual_count;
  const long long t = static_cast<long long>(month);
  return static_cast<int>(11 * a * t / 120 - 11 * a * (t - 1) / 120);
}

ResettlementScenario generate_synthetic_scenario(std::size_t k_u, std::size_t k_v,
                                                 std::size_t months, double arrival_rate,
                                                 std::uint64_t seed,
                                                 const SyntheticOptions& options) {
  if (k_u == 0 || k_v == 0 || months == 0) {
    throw std::invalid_argument("k_u, k_v and months must be positive");
  }
  if (!(arrival_rate >= 0.0)) throw std::invalid_argument("arrival_rate must be nonnegative");
  if (!(options.us_tie_probability >= 0.0 && options.us_tie_probability <= 1.0)) {
    throw std::invalid_argument("us_tie_probability must lie in [0,1]");
  }
  if (!(options.size_ratio > 0.0)) throw std::invalid_argument("size_ratio must be positive");

  Rng rng = make_rng(seed, 0);
  std::vector<double> size_weights;
  double mean_size = 0.0, total_w = 0.0;
  for (int s = 1; s <= 8; ++s) {
    size_weights.push_back(std::pow(options.size_ratio, s - 1));
    mean_size += s * size_weights.back();
    total_w += size_weights.back();
  }
  mean_size /= total_w;

  ResettlementScenario sc;
  sc.months = months;
  sc.k_u = k_u;
  std::gamma_distribution<double> share_dist(2.0, 1.0);
  std::vector<double> share(k_v);
  double share_sum = 0.0;
  for (auto& s : share) share_sum += (s = share_dist(rng));
  const double people_per_year = 12.0 * arrival_rate * mean_size;
  for (std::size_t k = 0; k < k_v; ++k) {
    const std::string num = std::to_string(k + 1);
    sc.affiliates.push_back(
        {"affiliate_" + std::string(num.size() < 2 ? "0" : "") + num,
         static_cast<int>(std::lround(people_per_year * share[k] / share_sum))});
  }

  std::normal_distribution<double> z;
  const double mu = -0.3;
  std::vector<double> gu(k_u), gv(k_v);
  for (auto& g : gu) g = 0.6 * z(rng);
  for (auto& g : gv) g = 0.4 * z(rng);
  for (std::size_t u = 0; u < k_u; ++u) {
    for (std::size_t v = 0; v < k_v; ++v) {
      sc.theta0.push_back(1.0 / (1.0 + std::exp(-(gu[u] + gv[v] + mu + 0.3 * z(rng)))));
    }
  }

  std::discrete_distribution<int> size_dist(size_weights.begin(), size_weights.end());
  std::discrete_distribution<std::size_t> tie_dist(share.begin(), share.end());
  std::uniform_int_distribution<std::size_t> u_dist(0, k_u - 1);
  std::bernoulli_distribution tie(options.us_tie_probability);
  std::size_t id = 1;
  for (std::size_t t = 1; t <= months; ++t) {
    int count = 0;
    if (arrival_rate > 0.0) count = std::poisson_distribution<int>(arrival_rate)(rng);
    for (int i = 0; i < count; ++i) {
      Family f;
      f.id = id++;
      f.size = size_dist(rng) + 1;
      f.u_type = u_dist(rng);
      f.us_tie = tie(rng);
      if (f.us_tie) f.tied_affiliate = tie_dist(rng);
      f.arrival_month = t;
      sc.families.push_back(f);
    }
  }
  return sc;
}

std::vector<double> ResettlementResult::cumulative_regret() const {
  std::vector<double> out;
  double total = 0.0;
  for (const auto& m : months) out.push_back(total += m.expected_regret);
  return out;
}

ResettlementResult run_resettlement(const ResettlementScenario& scenario, const ModelSpec& spec,
                                    std::uint64_t seed, const ResettlementOptions& options) {
  scenario.validate();
  if (scenario.theta0.empty()) throw std::invalid_argument("scenario has no calibrated theta0");
  const std::size_t nk = scenario.k_v();
  auto model = make_model(spec, scenario.k_u, nk);
  Rng policy = make_rng(seed, 0);
  Rng world = make_rng(seed, 1);
  std::uniform_real_distribution<double> unif;
  auto employed = [&](std::size_t u, std::size_t k) {
    return unif(world) < scenario.theta0[u * nk + k] ? 1.0 : 0.0;
  };

  std::vector<std::vector<const Family*>> arrivals(scenario.months + 1);
  for (const auto& f : scenario.families) arrivals[f.arrival_month].push_back(&f);

  ResettlementResult result;
  std::vector<int> carry(nk, 0);
  std::vector<const Family*> queue;
  std::size_t arrived = 0, placed = 0;
  for (std::size_t t = 1; t <= scenario.months; ++t) {
    MonthRecord rec;
    rec.month = t;
    std::vector<int> cap(nk);
    for (std::size_t k = 0; k < nk; ++k) {
      cap[k] = carry[k] + monthly_quota(scenario.affiliates[k].annual_count, t);
    }
    std::vector<Observation> obs;
    for (const Family* f : arrivals[t]) {
      ++arrived;
      if (!f->us_tie) {
        queue.push_back(f);
        continue;
      }
      const std::size_t k = *f->tied_affiliate;
      cap[k] -= f->size;
      if (cap[k] < 0) {
        rec.tie_overflow += -cap[k];
        cap[k] = 0;
      }
      const double y = employed(f->u_type, k);
      rec.placements.push_back({f->id, k, true, y});
      obs.push_back({f->u_type * nk + k, y});
      ++placed;
    }
    rec.capacity_available = cap;

    if (!queue.empty()) {
      MultipleKnapsack set;
      std::vector<std::size_t> u_of, v_of;
      for (const Family* f : queue) {
        set.weights.push_back(f->size);
        for (std::size_t k = 0; k < nk; ++k) {
          u_of.push_back(f->u_type);
          v_of.push_back(k);
        }
      }
      set.capacities = cap;
      set.node_limit = options.node_limit;
      const TypeStructure types(u_of, v_of, scenario.k_u, nk);
      const auto truth = types.broadcast(scenario.theta0);
      auto choice = thompson_step(*model, FeasibleSet{set}, types, policy);
      const auto best = solve_multiple_knapsack(truth, set);
      rec.oracle_value = best.value;
      rec.expected_regret = regret_of(best.value, reward(choice.action, truth));
      rec.solver_proven = choice.proven_optimal && best.proven_optimal;

      std::vector<char> taken(queue.size(), 0);
      for (auto o : choice.action.selected()) {
        const std::size_t i = o / nk, k = o % nk;
        const Family* f = queue[i];
        cap[k] -= f->size;
        const double y = employed(f->u_type, k);
        rec.placements.push_back({f->id, k, false, y});
        rec.realized_reward += y;
        obs.push_back({f->u_type * nk + k, y});
        taken[i] = 1;
        ++placed;
      }
      std::vector<const Family*> rest;
      for (std::size_t i = 0; i < queue.size(); ++i) {
        if (!taken[i]) rest.push_back(queue[i]);
      }
      queue = std::move(rest);
    }
    model->observe(obs);
    rec.capacity_left = cap;
    carry = cap;
    rec.arrived_total = arrived;
    rec.placed_total = placed;
    rec.queued = queue.size();
    result.months.push_back(std::move(rec));
  }
  return result;
}

HistoryCheck validate_resettlement(const ResettlementScenario& scenario,
                                   const ResettlementResult& result) {
  HistoryCheck check;
  auto fail = [&](std::size_t month, const std::string& what) {
    check.ok = false;
    check.violations.push_back("month " + std::to_string(month) + ": " + what);
  };
  std::unordered_map<std::size_t, const Family*> by_id;
  for (const auto& f : scenario.families) by_id[f.id] = &f;
  const std::size_t nk = scenario.k_v();
  std::set<std::size_t> done;
  std::vector<int> prev_left(nk, 0);
  for (const auto& m : result.months) {
    if (m.capacity_available.size() != nk || m.capacity_left.size() != nk) {
      fail(m.month, "capacity vectors have the wrong length");
      continue;
    }
    std::vector<int> used(nk, 0);
    for (const auto& p : m.placements) {
      const std::string tag = "family " + std::to_string(p.family_id);
      auto it = by_id.find(p.family_id);
      if (it == by_id.end()) {
        fail(m.month, tag + " is not in the scenario");
        continue;
      }
      const Family& f = *it->second;
      if (!done.insert(f.id).second) fail(m.month, tag + " placed more than once");
      if (p.affiliate >= nk) fail(m.month, tag + " sent to an unknown affiliate");
      if (m.month < f.arrival_month) fail(m.month, tag + " placed before arrival");
      if (p.tied != f.us_tie) fail(m.month, tag + " tie flag mismatch");
      if (f.us_tie) {
        if (p.affiliate != *f.tied_affiliate) fail(m.month, tag + " not at its tied affiliate");
        if (m.month != f.arrival_month) fail(m.month, tag + " (tied) not placed on arrival");
      } else if (p.affiliate < nk) {
        used[p.affiliate] += f.size;
      }
    }
    for (std::size_t k = 0; k < nk; ++k) {
      const std::string tag = "affiliate " + std::to_string(k + 1);
      if (m.capacity_available[k] < 0 || m.capacity_left[k] < 0) fail(m.month, tag + " negative capacity");
      if (used[k] > m.capacity_available[k]) fail(m.month, tag + " over capacity");
      if (m.capacity_left[k] != m.capacity_available[k] - used[k]) {
        fail(m.month, tag + " leftover capacity does not add up");
      }
      const int ceiling = prev_left[k] + monthly_quota(scenario.affiliates[k].annual_count, m.month);
      if (m.capacity_available[k] > ceiling) fail(m.month, tag + " gained capacity from nowhere");
    }
    prev_left = m.capacity_left;
  }
  return check;
}

bool check_conservation(const ResettlementResult& result) {
  std::size_t placed = 0;
  for (const auto& m : result.months) {
    placed += m.placements.size();
    if (m.placed_total != placed) return false;
    if (m.arrived_total != m.placed_total + m.queued) return false;
  }
  return true;
}

void write_placements_csv(std::ostream& out, const ResettlementResult& result) {
  out << "month,family_id,affiliate,tied,outcome\n";
  for (const auto& m : result.months) {
    for (const auto& p : m.placements) {
      out << m.month << ',' << p.family_id << ',' << (p.affiliate + 1) << ',' << (p.tied ? 1 : 0)
          << ',' << format_double(p.outcome) << '\n';
    }
  }
}

void write_resettlement_summary_csv(std::ostream& out, const ResettlementResult& result) {
  out << "month,arrived_total,placed_total,queued,tie_overflow,expected_regret,"
         "cumulative_regret,oracle_value,realized_reward,solver_proven\n";
  double cum = 0.0;
  for (const auto& m : result.months) {
    cum += m.expected_regret;
    out << m.month << ',' << m.arrived_total << ',' << m.placed_total << ',' << m.queued << ','
        << m.tie_overflow << ',' << format_double(m.expected_regret) << ',' << format_double(cum)
        << ',' << format_double(m.oracle_value) << ',' << format_double(m.realized_reward) << ','
        << (m.solver_proven ? 1 : 0) << '\n';
  }
}

}  // namespace combibandit
