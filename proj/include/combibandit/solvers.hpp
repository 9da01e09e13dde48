#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "combibandit/domain.hpp"

namespace combibandit {

// Choose any m of d options.
struct TopM {
  std::size_t d = 0;
  std::size_t m = 0;
};

// One-to-one matching of k rows to k columns. Option (r, c) is r * k + c.
struct Assignment {
  std::size_t k = 0;
};

// Many-to-one matching: every unit-demand item goes to one node, node r takes
// at most capacities[r] items. Option (i, r) is i * nodes + r.
struct Capacitated {
  std::size_t items = 0;
  std::vector<int> capacities;
};

// Items of integer weight (family size) packed into knapsacks (affiliates).
// Option (i, k) is i * knapsacks + k. Items that do not fit stay unassigned.
struct MultipleKnapsack {
  std::vector<int> weights;
  std::vector<int> capacities;
  // Search nodes before the solver settles for its incumbent; 0 = no limit.
  std::size_t node_limit = 500'000;
};

// An explicit list of feasible actions over d options.
struct Explicit {
  std::size_t d = 0;
  std::vector<ActionVector> actions;
};

using FeasibleSet =
    std::variant<TopM, Assignment, Capacitated, MultipleKnapsack, Explicit>;

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EnumerationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Number of options d.
std::size_t option_count(const FeasibleSet& set);
// Batch size m; for MultipleKnapsack the number of items.
std::size_t batch_size(const FeasibleSet& set);
std::string family_name(const FeasibleSet& set);

struct Solution {
  ActionVector action;
  double value = 0.0;
  // MultipleKnapsack only: items left for the next period.
  std::vector<std::size_t> unassigned;
  // MultipleKnapsack only: false when the node limit cut the search short;
  // `bound` then caps the optimum.
  bool proven_optimal = true;
  double bound = 0.0;
};

// Indicator of the m largest entries; ties go to the lower index.
ActionVector solve_top_m(std::span<const double> theta_hat, std::size_t m);

// Maximum-value perfect matching (Hungarian method). values is row-major k x k.
Solution solve_assignment(std::span<const double> values, std::size_t k);
// Rejects a non-square matrix.
Solution solve_assignment(const std::vector<std::vector<double>>& matrix);

// Exact optimum by min-cost flow. Throws InfeasibleError if the capacities
// cannot host every item.
Solution solve_capacitated(std::span<const double> theta_hat,
                           const Capacitated& set);

// Depth-first branch-and-bound with fractional and Lagrangian bounds. Exact
// unless set.node_limit is reached (see Solution::proven_optimal).
Solution solve_multiple_knapsack(std::span<const double> theta_hat,
                                 const MultipleKnapsack& set);

// Dispatches on the variant. Explicit sets are scanned linearly.
Solution solve(const FeasibleSet& set, std::span<const double> theta_hat);

// Every feasible action. Throws EnumerationLimitError once more than `limit`
// actions exist. MultipleKnapsack enumerates partial assignments too.
std::vector<ActionVector> enumerate_feasible(const FeasibleSet& set,
                                             std::size_t limit);

// Structural check of one action against the set's constraints.
bool is_feasible(const FeasibleSet& set, const ActionVector& action,
                 std::string* why = nullptr);

// Throws std::invalid_argument for malformed descriptors (negative
// capacities, non-positive weights, m > d, bad explicit actions).
void check_feasible_set(const FeasibleSet& set);

}  // namespace combibandit
