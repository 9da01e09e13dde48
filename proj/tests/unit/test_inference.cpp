#include <algorithm>
#include <sstream>

#include "combibandit/engine.hpp"
#include "combibandit/inference.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace combibandit;

namespace {

History null_history(std::size_t d, std::size_t m, std::size_t periods, std::uint64_t seed) {
  Environment env{ThetaVector(std::vector<double>(d, 0.5))};
  return run_episode(env, ModelSpec{}, TopM{d, m}, TypeStructure::identity(d), periods, seed)
      .history();
}

}  // namespace

TEST_CASE("p-value convention") {
  CHECK(permutation_p_value(1.0, {0.0, 0.5, 0.9}) == doctest::Approx(0.25));
  CHECK(permutation_p_value(0.0, {0.0, 0.0, 0.0}) == 1.0);
  CHECK(permutation_p_value(0.5, {}) == 1.0);
}

TEST_CASE("constant statistic gives p = 1") {
  auto h = null_history(4, 2, 10, 3);
  auto r = randomization_test(h, ModelSpec{}, TopM{4, 2}, TypeStructure::identity(4), NullSpec{},
                              [](const History&) { return 2.5; }, 49, 1);
  CHECK(r.p_value == 1.0);
  CHECK(r.resamples.size() == 49);
}

TEST_CASE("extreme statistic gives the smallest p-value") {
  auto h = null_history(4, 2, 10, 3);
  // Large only for the observed history, which is the one carrying this tag.
  const auto tagged = h;
  auto stat = [&](const History& x) { return x == tagged ? 1.0 : 0.0; };
  auto r = randomization_test(h, ModelSpec{}, TopM{4, 2}, TypeStructure::identity(4), NullSpec{},
                              stat, 99, 1);
  CHECK(r.p_value == doctest::Approx(1.0 / 100.0));
  CHECK(r.p_value >= 1.0 / 100.0);
}

TEST_CASE("resamples are reproducible") {
  auto h = null_history(4, 2, 12, 8);
  auto stat = group_mean_difference({0, 1}, {2, 3});
  auto a = randomization_test(h, ModelSpec{}, TopM{4, 2}, TypeStructure::identity(4),
                              NullSpec{NullVariant::global}, stat, 30, 5);
  auto b = randomization_test(h, ModelSpec{}, TopM{4, 2}, TypeStructure::identity(4),
                              NullSpec{NullVariant::global}, stat, 30, 5);
  CHECK(a.resamples == b.resamples);
  CHECK(a.p_value == b.p_value);
  CHECK((a.p_value >= 1.0 / 31 && a.p_value <= 1.0));
}

TEST_CASE("global null imputation keeps the realized outcomes of the period") {
  History h;
  h.append(ActionVector::from_bits({1, 0, 1, 0}),
           OutcomeVector({1.0, std::nullopt, 0.0, std::nullopt}));
  Rng rng(1);
  auto y = impute_outcomes(NullSpec{NullVariant::global}, h, 0, ActionVector::from_bits({0, 1, 0, 1}),
                           TypeStructure::identity(4), rng);
  CHECK_FALSE(y.observed(0));
  CHECK(*y[1] == 1.0);
  CHECK(*y[3] == 0.0);
}

TEST_CASE("row and column nulls copy outcomes of the same type") {
  // 2 x 2 grid: option j = u * 2 + v.
  const auto types = TypeStructure::grid(2, 2);
  History h;
  // Realized: (u0, v0) = 1, (u1, v1) = 0.
  h.append(ActionVector::from_bits({1, 0, 0, 1}), OutcomeVector({1.0, std::nullopt, std::nullopt, 0.0}));
  const auto swap = ActionVector::from_bits({0, 1, 1, 0});  // (u0, v1), (u1, v0)
  Rng rng(2);
  auto row = impute_outcomes(NullSpec{NullVariant::row}, h, 0, swap, types, rng);
  CHECK(*row[1] == 1.0);  // refugee u0 keeps its outcome
  CHECK(*row[2] == 0.0);
  auto col = impute_outcomes(NullSpec{NullVariant::column}, h, 0, swap, types, rng);
  CHECK(*col[1] == 0.0);  // community v1 keeps its outcome
  CHECK(*col[2] == 1.0);
}

TEST_CASE("row null falls back to the type's outcomes elsewhere in the history") {
  const auto types = TypeStructure::grid(2, 2);
  History h;
  h.append(ActionVector::from_bits({1, 0, 0, 0}), OutcomeVector({0.25, std::nullopt, std::nullopt, std::nullopt}));
  h.append(ActionVector::from_bits({0, 0, 1, 0}), OutcomeVector({std::nullopt, std::nullopt, 0.75, std::nullopt}));
  Rng rng(3);
  // Period 2 has no u0 outcome; the only one in the history is 0.25.
  auto y = impute_outcomes(NullSpec{NullVariant::row}, h, 1, ActionVector::from_bits({0, 1, 0, 0}), types, rng);
  CHECK(*y[1] == 0.25);
}

TEST_CASE("mismatched history is rejected") {
  auto h = null_history(4, 2, 5, 1);
  CHECK_THROWS_AS(randomization_test(h, ModelSpec{}, TopM{5, 2}, TypeStructure::identity(5),
                                     NullSpec{}, mean_outcome(), 5, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(randomization_test(h, ModelSpec{}, TopM{4, 1}, TypeStructure::identity(4),
                                     NullSpec{}, mean_outcome(), 5, 1),
                  std::invalid_argument);
  CHECK_THROWS(parse_null_variant("diagonal"));
  CHECK(parse_null_variant(to_string(NullVariant::column)) == NullVariant::column);
}

TEST_CASE("p-values are roughly uniform under the global null") {
  std::vector<double> p;
  for (std::uint64_t sim = 0; sim < 150; ++sim) {
    auto h = null_history(4, 2, 10, 1000 + sim);
    auto r = randomization_test(h, ModelSpec{}, TopM{4, 2}, TypeStructure::identity(4),
                                NullSpec{NullVariant::global}, group_mean_difference({0, 1}, {2, 3}), 99,
                                derive_seed(77, sim));
    // Break rank ties at random so the p-value is continuous under the null.
    std::size_t above = 0, tied = 0;
    for (double x : r.resamples) {
      if (x > r.observed + 1e-12) ++above;
      else if (std::abs(x - r.observed) <= 1e-12) ++tied;
    }
    Rng u(sim);
    const double jitter = std::uniform_real_distribution<double>(0.0, 1.0)(u);
    p.push_back((above + jitter * (tied + 1)) / 100.0);
  }
  CHECK(oracle::ks_uniform_pvalue(p) > 0.01);
}

TEST_CASE("report and csv") {
  TestResult r{NullVariant::row, 0.5, {0.1, 0.7}, 2.0 / 3.0};
  std::ostringstream a, b;
  write_test_report(a, r);
  write_resamples_csv(b, r);
  CHECK(a.str().find("null=row\n") != std::string::npos);
  CHECK(a.str().find("resamples=2\n") != std::string::npos);
  CHECK(b.str().rfind("resample_index,statistic\n1,", 0) == 0);
}
