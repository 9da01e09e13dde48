#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "combibandit/domain.hpp"
#include "combibandit/posterior.hpp"
#include "combibandit/rng.hpp"
#include "combibandit/solvers.hpp"

namespace combibandit {

// row: outcomes depend on the u type only. column: on the v type only.
// global: outcomes do not depend on the action at all.
enum class NullVariant { row, column, global };

std::string to_string(NullVariant variant);
NullVariant parse_null_variant(std::string_view name);

struct NullSpec {
  NullVariant variant = NullVariant::global;
};

// Outcomes the null assigns to `action` in the period of `realized`.
//
// row/column copy a realized outcome from the same period with the same u
// (or v) type, choosing uniformly with `rng` when there are several. With no
// such outcome in the period they draw from that type's outcomes over the
// whole history, then from the period, then from the whole history.
// global hands the realized outcomes of the period to the chosen options in
// index order, drawing from the whole history for any surplus.
OutcomeVector impute_outcomes(const NullSpec& null, const History& observed, std::size_t period_index,
                              const ActionVector& action, const TypeStructure& types, Rng& rng);

// Called from several threads at once during a test.
using Statistic = std::function<double(const History&)>;

// Mean observed outcome over options in `a` minus the same over `b`; a group
// with no observations contributes 0.
Statistic group_mean_difference(std::vector<std::size_t> a, std::vector<std::size_t> b);
Statistic mean_outcome();
Statistic absolute(Statistic s);

struct TestResult {
  NullVariant variant = NullVariant::global;
  double observed = 0.0;
  std::vector<double> resamples;
  double p_value = 1.0;
};

// (1 + #{resamples >= observed}) / (1 + n).
double permutation_p_value(double observed, const std::vector<double>& resamples);

// Re-runs Thompson sampling over the observed number of periods with
// outcomes imputed under `null`, `n_resamples` times. Resample r uses seed
// derive_seed(seed, r) and runs on thread_count() workers. Throws
// std::invalid_argument when the history does not fit the feasible set.
TestResult randomization_test(const History& observed, const ModelSpec& spec,
                              const FeasibleSet& set, const TypeStructure& types,
                              const NullSpec& null, const Statistic& statistic,
                              std::size_t n_resamples, std::uint64_t seed);

// key=value lines: null, observed, resamples, p_value.
void write_test_report(std::ostream& out, const TestResult& result);
// CSV: resample_index,statistic (one-based index).
void write_resamples_csv(std::ostream& out, const TestResult& result);

}  // namespace combibandit
