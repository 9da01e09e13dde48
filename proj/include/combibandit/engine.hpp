#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "combibandit/domain.hpp"
#include "combibandit/posterior.hpp"
#include "combibandit/rng.hpp"
#include "combibandit/solvers.hpp"

namespace combibandit {

enum class OutcomeFamily { bernoulli, gaussian_truncated, beta_binomial };

std::string to_string(OutcomeFamily family);
OutcomeFamily parse_outcome_family(std::string_view name);

// Potential outcomes are drawn independently per option and i.i.d. across
// periods given theta0.
struct Environment {
  ThetaVector theta0;
  OutcomeFamily family = OutcomeFamily::bernoulli;
  // gaussian_truncated: N(theta, sigma_sq) conditioned on [0,1].
  double sigma_sq = 0.01;
  // beta_binomial: Binomial(y_bar, p) / y_bar with p ~ Beta(m theta, m (1 - theta)).
  double dispersion = 10.0;
  int y_bar = 1;

  std::vector<double> draw(Rng& rng) const;
};

struct ThompsonChoice {
  ActionVector action;
  // Posterior draw the solver saw, one raw value per option.
  std::vector<double> theta_hat;
  std::vector<std::size_t> unassigned;
  bool proven_optimal = true;
};

// One posterior draw, then the exact argmax over the feasible set.
ThompsonChoice thompson_step(PosteriorModel& model, const FeasibleSet& set,
                             const TypeStructure& types, Rng& rng);
// Fits a fresh model to the whole history first.
ThompsonChoice thompson_step(const ModelSpec& spec, const History& history,
                             const FeasibleSet& set, const TypeStructure& types, Rng& rng);

struct OracleResult {
  ActionVector action;
  double value = 0.0;
};
OracleResult oracle_action(const ThetaVector& theta0, const FeasibleSet& set);

struct PeriodRecord {
  std::size_t period = 0;
  ActionVector action;
  OutcomeVector outcomes;
  std::vector<double> theta_hat;  // empty unless recorded
  double expected_regret = 0.0;
  double realized_reward = 0.0;
};

struct Trajectory {
  std::vector<PeriodRecord> periods;
  ActionVector oracle_action;
  double oracle_value = 0.0;

  std::vector<double> cumulative_regret() const;
  History history() const;
};

struct EpisodeOptions {
  bool record_theta_hat = true;
};

// Policy and environment use separate streams derived from `seed`, so the
// action at period t depends only on earlier outcomes and the policy stream.
Trajectory run_episode(const Environment& env, const ModelSpec& spec, const FeasibleSet& set,
                       const TypeStructure& types, std::size_t horizon, std::uint64_t seed,
                       const EpisodeOptions& options = {});

// Same loop with the potential outcomes given up front (one row per period).
Trajectory run_episode_on_outcomes(const ModelSpec& spec, const FeasibleSet& set,
                                   const TypeStructure& types, const ThetaVector& theta0,
                                   const std::vector<std::vector<double>>& potential,
                                   std::uint64_t seed, const EpisodeOptions& options = {});

// Cumulative regret curves of `replications` independent episodes, run on
// thread_count() workers. Replication r uses derive_seed(base_seed, r).
std::vector<std::vector<double>> replicate_regret(const Environment& env, const ModelSpec& spec,
                                                  const FeasibleSet& set,
                                                  const TypeStructure& types,
                                                  std::size_t horizon, std::size_t replications,
                                                  std::uint64_t base_seed);

// CSV: period,action,expected_regret,cumulative_regret,realized_reward; the
// action column joins one-based option indices with ';'.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

// ---------------------------------------------------------------------------
// Refugee resettlement

struct Family {
  std::size_t id = 0;
  int size = 1;
  std::size_t u_type = 0;
  bool us_tie = false;
  std::optional<std::size_t> tied_affiliate;
  std::size_t arrival_month = 1;  // one-based
};

struct Affiliate {
  std::string name;
  // Actual resettlements per year; capacity is 110% of it.
  int annual_count = 0;
};

struct ResettlementScenario {
  std::size_t months = 0;
  std::size_t k_u = 0;
  std::vector<Affiliate> affiliates;
  std::vector<Family> families;
  // Calibrated employment probabilities, one per (u, affiliate) cell, row-major.
  std::vector<double> theta0;

  std::size_t k_v() const { return affiliates.size(); }
  // Throws std::invalid_argument describing the first problem found.
  void validate() const;
};

// Capacity added in a given month: floor(1.1 * annual * t / 12) minus the
// same at t - 1, so twelve months sum to floor(1.1 * annual).
int monthly_quota(int annual_count, std::size_t month);

struct SyntheticOptions {
  double us_tie_probability = 0.3;
  // Family size s in 1..8 has weight ratio^(s-1).
  double size_ratio = 0.6;
};

ResettlementScenario generate_synthetic_scenario(std::size_t k_u, std::size_t k_v,
                                                 std::size_t months, double arrival_rate,
                                                 std::uint64_t seed,
                                                 const SyntheticOptions& options = {});

struct Placement {
  std::size_t family_id = 0;
  std::size_t affiliate = 0;
  bool tied = false;
  double outcome = 0.0;
};

struct MonthRecord {
  std::size_t month = 0;
  std::vector<Placement> placements;
  // Capacity open to the matching after US-tie deductions, and what is left.
  std::vector<int> capacity_available;
  std::vector<int> capacity_left;
  // People a tied family brought beyond its affiliate's remaining capacity.
  int tie_overflow = 0;
  std::size_t arrived_total = 0;
  std::size_t placed_total = 0;
  std::size_t queued = 0;
  double expected_regret = 0.0;
  double oracle_value = 0.0;
  double realized_reward = 0.0;
  // Both knapsack solves (Thompson and oracle) finished within the node limit.
  bool solver_proven = true;
};

struct ResettlementResult {
  std::vector<MonthRecord> months;
  std::vector<double> cumulative_regret() const;
};

struct ResettlementOptions {
  std::size_t node_limit = MultipleKnapsack{}.node_limit;
};

ResettlementResult run_resettlement(const ResettlementScenario& scenario, const ModelSpec& spec,
                                    std::uint64_t seed, const ResettlementOptions& options = {});

// Capacity respected, each family placed whole, at most once, not before it
// arrived, tied families at their affiliate in their arrival month.
HistoryCheck validate_resettlement(const ResettlementScenario& scenario,
                                   const ResettlementResult& result);

// arrived = placed + queued every month.
bool check_conservation(const ResettlementResult& result);

// CSV: month,family_id,affiliate,tied,outcome (one-based ids).
void write_placements_csv(std::ostream& out, const ResettlementResult& result);
// CSV: month,arrived_total,placed_total,queued,tie_overflow,expected_regret,
// cumulative_regret,oracle_value,realized_reward,solver_proven
void write_resettlement_summary_csv(std::ostream& out, const ResettlementResult& result);

}  // namespace combibandit
