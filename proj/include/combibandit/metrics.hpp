#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "combibandit/engine.hpp"
#include "combibandit/solvers.hpp"

namespace combibandit {

inline constexpr double kInfiniteDivergence = std::numeric_limits<double>::infinity();

// Natural-log entropy of a Bernoulli(p); 0 log 0 = 0.
double bernoulli_entropy(double p);
// KL(Bernoulli(p) || Bernoulli(q)); kInfiniteDivergence when q is 0 or 1 and p != q.
double bernoulli_kl(double p, double q);

// Joint pmf of two finite discrete variables, rows indexed by X.
class DiscreteJoint {
 public:
  // Throws std::invalid_argument for ragged rows, negative entries or a total
  // further than 1e-12 from 1.
  explicit DiscreteJoint(std::vector<std::vector<double>> pmf);

  std::size_t rows() const { return pmf_.size(); }
  std::size_t cols() const { return pmf_.empty() ? 0 : pmf_[0].size(); }
  double operator()(std::size_t x, std::size_t y) const { return pmf_[x][y]; }
  std::vector<double> marginal_x() const;
  std::vector<double> marginal_y() const;

 private:
  std::vector<std::vector<double>> pmf_;
};

double entropy(const std::vector<double>& pmf);
// H(X | Y).
double conditional_entropy(const DiscreteJoint& joint);
double mutual_information(const DiscreteJoint& joint);

struct BoundSpec {
  std::size_t d = 1;
  std::size_t m = 1;
  std::size_t horizon = 1;

  void validate() const;
};

// sqrt(d t m (log(d/m) + 1) / 2).
double theorem1_bound(const BoundSpec& spec, std::size_t t);
double theorem1_bound(std::size_t d, std::size_t m, std::size_t t);
// Increment of the cumulative bound divided by m.
double per_capita_bound(const BoundSpec& spec, std::size_t t);
// m (log(d/m) + 1) and its sharper precursor d H(m/d).
double entropy_budget(std::size_t d, std::size_t m);
double optimal_action_entropy_bound(std::size_t d, std::size_t m);

// CSV: t,cumulative_bound,per_capita_bound for t = 1..horizon.
void write_bound_curve_csv(std::ostream& out, const BoundSpec& spec);

std::vector<double> cumulative_regret(const Trajectory& trajectory);

struct RegretSummary {
  std::vector<double> mean;
  std::vector<double> std_error;
};
// Pointwise mean and standard error over equally long curves.
RegretSummary summarize_regret(const std::vector<std::vector<double>>& curves);

// ---------------------------------------------------------------------------
// Exact lemma checks on small instances

struct DiscretePriorInstance {
  std::string name;
  FeasibleSet set;
  // Support points of the prior and their probabilities. Outcomes are
  // Bernoulli given theta.
  std::vector<std::vector<double>> support;
  std::vector<double> weights;
};

struct NodeCheck {
  std::size_t depth = 0;
  double probability = 0.0;
  double expected_regret = 0.0;
  double lemma1_rhs = 0.0;
  // Largest violation across options; <= 0 means every inequality held.
  double lemma2_excess = 0.0;
  double pinsker_excess = 0.0;
};

struct LemmaReport {
  std::string instance;
  std::size_t depth = 0;
  std::size_t nodes = 0;
  std::size_t lemma1_failures = 0;
  std::size_t lemma2_failures = 0;
  std::size_t pinsker_failures = 0;
  // Expected total information over the horizon, the same quantity obtained
  // as entropy reduction of the optimal action, and the root entropies.
  double information_sum = 0.0;
  double entropy_reduction = 0.0;
  double root_entropy = 0.0;
  double entropy_bound = 0.0;
  double budget = 0.0;
  bool lemma3_holds = false;
  bool chain_rule_holds = false;
  std::vector<NodeCheck> checks;

  bool ok() const;
};

inline constexpr std::size_t kMaxLemmaActions = 20;

// Enumerates every reachable history of Thompson sampling up to `depth`
// periods. Throws std::invalid_argument when the feasible set has more than
// kMaxLemmaActions actions, the support is empty, or the tree would exceed
// `max_nodes`.
LemmaReport verify_lemma_properties(const DiscretePriorInstance& instance, std::size_t depth = 3,
                                    std::size_t max_nodes = 2'000'000);

std::vector<DiscretePriorInstance> packaged_lemma_instances();

void write_lemma_report(std::ostream& out, const LemmaReport& report);

}  // namespace combibandit
