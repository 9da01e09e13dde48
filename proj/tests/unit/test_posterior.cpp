#include <cmath>
#include <random>
#include <sstream>

#include "combibandit/posterior.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace combibandit;

namespace {

History single_cell_history(int ones, int zeros, double scale = 1.0) {
  History h;
  for (int i = 0; i < ones + zeros; ++i) {
    ActionVector a(1);
    a.set(0);
    h.append(a, OutcomeVector({std::optional<double>(i < ones ? scale : 0.0)}));
  }
  return h;
}

HierarchicalPrior single_cell_prior(double mu, double tau_sq) {
  HierarchicalPrior p;
  p.row_effects = false;
  p.col_effects = false;
  p.fixed_mu = mu;
  p.fixed_tau_uv_sq = tau_sq;
  return p;
}

struct Summary {
  double mean;
  double se;
};

Summary summarize(const std::vector<double>& x) {
  const double ess = effective_sample_size(x);
  return {oracle::mean(x), std::sqrt(oracle::variance(x) / ess)};
}

}  // namespace

TEST_CASE("beta-bernoulli conjugate updates") {
  auto s = BetaBernoulliState::uniform(2);
  ActionVector a(2);
  a.set(0);
  s = beta_bernoulli_update(s, a, OutcomeVector({1.0, std::nullopt}));
  CHECK(s.alpha[0] == 2.0);
  CHECK(s.beta[0] == 1.0);
  CHECK(s.alpha[0] / (s.alpha[0] + s.beta[0]) == doctest::Approx(2.0 / 3.0));
  CHECK(s.alpha[1] == 1.0);
  CHECK(s.beta[1] == 1.0);

  BetaBernoulliState t{{2.0}, {3.0}};
  ActionVector one(1);
  one.set(0);
  t = beta_bernoulli_update(t, one, OutcomeVector({0.0}));
  CHECK(t.alpha[0] == 2.0);
  CHECK(t.beta[0] == 4.0);

  CHECK_THROWS_AS(beta_bernoulli_update(t, one, OutcomeVector({0.5})), std::invalid_argument);
}

TEST_CASE("beta-bernoulli sampling: uniform prior, concentration, sharing") {
  Rng rng(11);
  auto s = BetaBernoulliState::uniform(1);
  std::vector<double> x;
  for (int i = 0; i < 10000; ++i) {
    x.push_back(sample_theta_beta_bernoulli(s, TypeStructure::identity(1), rng)[0]);
  }
  CHECK(oracle::ks_uniform_pvalue(x) > 0.01);

  BetaBernoulliState big{{1e6}, {1.0}};
  for (int i = 0; i < 100; ++i) {
    CHECK(sample_theta_beta_bernoulli(big, TypeStructure::identity(1), rng)[0] > 1.0 - 1e-3);
  }

  // Options 0 and 2 share a cell.
  TypeStructure types({0, 1, 0}, {0, 0, 0}, 2, 1);
  auto shared = BetaBernoulliState::uniform(3);
  for (int i = 0; i < 50; ++i) {
    const auto th = sample_theta_beta_bernoulli(shared, types, rng);
    CHECK(th[0] == th[2]);
  }
}

TEST_CASE("beta-bernoulli pooling sums the evidence of options in a cell") {
  TypeStructure types({0, 0}, {0, 0}, 1, 1);
  BetaBernoulliState s{{5.0, 3.0}, {1.0, 2.0}, 1.0, 1.0};
  // Pooled cell: Beta(1 + 4 + 2, 1 + 0 + 1) = Beta(7, 2), mean 7/9.
  Rng rng(3);
  double total = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) total += sample_theta_beta_bernoulli(s, types, rng)[0];
  CHECK(total / n == doctest::Approx(7.0 / 9.0).epsilon(0.01));
}

TEST_CASE("gaussian collapsed sub-model matches the normal-normal posterior") {
  auto prior = single_cell_prior(0.0, 1.0);
  prior.fixed_sigma_sq = 1.0;
  Rng rng(101);
  auto draws = mcmc_sample_gaussian(single_cell_history(1, 0), TypeStructure::identity(1), prior,
                                    20000, McmcSettings{500, 1}, rng);
  const auto x = draws.option_series(0);
  const auto s = summarize(x);
  CHECK(std::abs(s.mean - 0.5) < 3.0 * s.se);
  CHECK(oracle::variance(x) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("gaussian model with no data recovers the prior push-forward") {
  HierarchicalPrior prior;
  prior.fixed_tau_u_sq = 0.5;
  prior.fixed_tau_v_sq = 0.25;
  prior.fixed_tau_uv_sq = 1.0;
  Rng rng(5);
  auto draws = mcmc_sample_gaussian(History{}, TypeStructure::grid(2, 2), prior, 20000,
                                    McmcSettings{500, 1}, rng);
  // theta = Gu + Gv + Guv with Guv ~ N(mu, 1), mu ~ N(0, 25): variance 26.75.
  const auto x = draws.option_series(3);
  const auto s = summarize(x);
  CHECK(std::abs(s.mean) < 3.0 * s.se);

  std::normal_distribution<double> z;
  Rng direct(6);
  std::vector<double> sim;
  for (int i = 0; i < 100000; ++i) {
    sim.push_back(std::sqrt(0.5) * z(direct) + 0.5 * z(direct) + 5.0 * z(direct) + z(direct));
  }
  CHECK(oracle::variance(x) == doctest::Approx(oracle::variance(sim)).epsilon(0.15));
}

TEST_CASE("gaussian label symmetry across u-types with identical data") {
  History h;
  for (int i = 0; i < 6; ++i) {
    const double y = 0.2 + 0.1 * i;
    h.append(ActionVector::from_bits({1, 1}), OutcomeVector({y, y}));
  }
  Rng rng(9);
  auto draws = mcmc_sample_gaussian(h, TypeStructure::grid(2, 1), HierarchicalPrior{}, 20000,
                                    McmcSettings{1000, 1}, rng);
  const auto a = summarize(draws.option_series(0));
  const auto b = summarize(draws.option_series(1));
  CHECK(std::abs(a.mean - b.mean) < 3.0 * std::hypot(a.se, b.se));
}

TEST_CASE("logit single cell matches grid quadrature") {
  const auto prior = single_cell_prior(0.0, 1.0);
  Rng rng(21);
  auto draws = mcmc_sample_logit(single_cell_history(14, 6), TypeStructure::identity(1), prior,
                                 20000, McmcSettings{1000, 1}, rng);
  const auto s = summarize(draws.option_series(0));
  const double exact = oracle::logit_posterior_mean_quadrature(0.0, 1.0, 14.0, 20.0);
  CHECK(std::abs(s.mean - exact) < 3.0 * s.se);
  const auto acc = draws.chain_diagnostics.at("accept_gamma_uv");
  CHECK(acc > 0.2);
  CHECK(acc < 0.5);
}

TEST_CASE("logit model: monotone updating, range, errors") {
  Rng rng(4);
  auto draws = mcmc_sample_logit(single_cell_history(40, 0), TypeStructure::identity(1),
                                 HierarchicalPrior{}, 2000, McmcSettings{500, 1}, rng);
  CHECK(oracle::mean(draws.option_series(0)) > 0.5);
  for (const auto& d : draws.draws) {
    CHECK(d[0] > 0.0);
    CHECK(d[0] < 1.0);
  }
  CHECK_THROWS_AS(mcmc_sample_logit(single_cell_history(1, 1, 0.5), TypeStructure::identity(1),
                                    HierarchicalPrior{}, 10, McmcSettings{10, 1}, rng),
                  std::invalid_argument);
}

TEST_CASE("logit prior push-forward with no data") {
  const auto prior = single_cell_prior(0.5, 0.64);
  Rng rng(8);
  auto draws = mcmc_sample_logit(History{}, TypeStructure::identity(1), prior, 20000,
                                 McmcSettings{500, 1}, rng);
  const auto s = summarize(draws.option_series(0));
  std::normal_distribution<double> z;
  Rng direct(1);
  std::vector<double> sim;
  for (int i = 0; i < 100000; ++i) sim.push_back(oracle::logistic(0.5 + 0.8 * z(direct)));
  CHECK(std::abs(s.mean - oracle::mean(sim)) < 3.0 * s.se + 3.0 * std::sqrt(oracle::variance(sim) / 1e5));
}

TEST_CASE("beta-binomial with y_bar = 1 agrees with the logit model") {
  History h;
  for (int i = 0; i < 15; ++i) {
    h.append(ActionVector::from_bits({1, 1}), OutcomeVector({double(i % 3 == 0), double(i % 2)}));
  }
  const auto types = TypeStructure::grid(2, 1);
  HierarchicalPrior prior;
  prior.y_bar = 1;
  Rng r1(31), r2(32);
  auto logit = mcmc_sample_logit(h, types, prior, 5000, McmcSettings{1000, 10}, r1);
  auto bb = mcmc_sample_beta_binomial(h, types, prior, 5000, McmcSettings{1000, 10}, r2);
  CHECK(oracle::ks_two_sample_pvalue(logit.option_series(0), bb.option_series(0)) > 0.01);
  CHECK(oracle::ks_two_sample_pvalue(logit.option_series(1), bb.option_series(1)) > 0.01);
}

TEST_CASE("beta-binomial single cell with fixed dispersion matches quadrature") {
  auto prior = single_cell_prior(0.0, 1.0);
  prior.y_bar = 4;
  prior.fixed_dispersion = 3.0;
  // y values 0..4 with counts 1,2,3,5,2.
  const std::vector<double> hist{1, 2, 3, 5, 2};
  History h;
  for (std::size_t y = 0; y < hist.size(); ++y) {
    for (int k = 0; k < hist[y]; ++k) {
      ActionVector a(1);
      a.set(0);
      h.append(a, OutcomeVector({static_cast<double>(y) / 4.0}));
    }
  }
  Rng rng(41);
  auto draws = mcmc_sample_beta_binomial(h, TypeStructure::identity(1), prior, 20000,
                                         McmcSettings{1000, 1}, rng);
  const auto s = summarize(draws.option_series(0));
  const double exact = oracle::beta_binomial_posterior_mean_quadrature(0.0, 1.0, 3.0, hist);
  CHECK(std::abs(s.mean - exact) < 3.0 * s.se);

  HierarchicalPrior bad = prior;
  CHECK_THROWS_AS(mcmc_sample_beta_binomial(single_cell_history(1, 0, 0.3),
                                            TypeStructure::identity(1), bad, 10,
                                            McmcSettings{10, 1}, rng),
                  std::invalid_argument);
}

TEST_CASE("beta-binomial with free dispersion stays in range") {
  auto prior = HierarchicalPrior{};
  prior.y_bar = 3;
  History h;
  for (int i = 0; i < 10; ++i) {
    h.append(ActionVector::from_bits({1, 0, 1}), OutcomeVector({(i % 4) / 3.0 > 1 ? 1.0 : (i % 4) / 3.0, std::nullopt, 1.0}));
  }
  Rng rng(2);
  auto draws = mcmc_sample_beta_binomial(h, TypeStructure::identity(3), prior, 500,
                                         McmcSettings{500, 1}, rng);
  CHECK(draws.chain_diagnostics.count("accept_dispersion") == 1);
  for (const auto& d : draws.draws) {
    for (double t : d) {
      CHECK(t > 0.0);
      CHECK(t < 1.0);
    }
  }
}

TEST_CASE("credible intervals") {
  PosteriorDraws same;
  for (int i = 0; i < 5; ++i) same.draws.push_back({0.3});
  auto [lo, hi] = credible_interval(same, 0, 0.9);
  CHECK(lo == 0.3);
  CHECK(hi == 0.3);

  PosteriorDraws ten;
  for (int i = 1; i <= 10; ++i) ten.draws.push_back({i / 10.0});
  auto ci = credible_interval(ten, 0, 0.8);
  CHECK(ci.first == doctest::Approx(0.19));
  CHECK(ci.second == doctest::Approx(0.91));

  auto wide = credible_interval(ten, 0, 0.95);
  auto narrow = credible_interval(ten, 0, 0.5);
  CHECK(wide.first <= narrow.first);
  CHECK(wide.second >= narrow.second);

  PosteriorDraws one;
  one.draws.push_back({0.5});
  CHECK_THROWS_AS(credible_interval(one, 0, 0.9), std::invalid_argument);
}

TEST_CASE("effective sample size") {
  Rng rng(1);
  std::normal_distribution<double> z;
  std::vector<double> iid, ar;
  double x = 0.0;
  for (int i = 0; i < 20000; ++i) {
    iid.push_back(z(rng));
    x = 0.9 * x + z(rng);
    ar.push_back(x);
  }
  CHECK(effective_sample_size(iid) == doctest::Approx(20000).epsilon(0.15));
  // AR(1): n (1 - rho) / (1 + rho).
  CHECK(effective_sample_size(ar) == doctest::Approx(20000 * 0.1 / 1.9).epsilon(0.25));
}

TEST_CASE("samplers are deterministic under a seed") {
  const auto h = single_cell_history(3, 2);
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    return mcmc_sample_logit(h, TypeStructure::identity(1), HierarchicalPrior{}, 100,
                             McmcSettings{100, 1}, rng)
        .draws;
  };
  CHECK(run(7) == run(7));
  CHECK(run(7) != run(8));
}

TEST_CASE("draws csv and diagnostics export") {
  PosteriorDraws d;
  d.model = ModelFamily::logit_hier;
  d.draws = {{0.25, 0.5}, {0.75, 1.0}};
  d.chain_diagnostics["ess_min"] = 2.0;
  std::ostringstream csv, diag;
  write_draws_csv(csv, d);
  write_diagnostics(diag, d);
  CHECK(csv.str() == "draw_index,option_index,theta\n1,1,0.25\n1,2,0.5\n2,1,0.75\n2,2,1\n");
  CHECK(diag.str() == "model=logit\ndraws=2\ness_min=2\n");
}

TEST_CASE("posterior model interface") {
  ModelSpec spec;
  auto model = make_model(spec, 2, 1);
  CHECK(model->cells() == 2);
  std::vector<Observation> obs{{0, 1.0}, {0, 1.0}, {1, 0.0}};
  model->observe(obs);
  Rng rng(3);
  double m0 = 0.0, m1 = 0.0;
  for (int i = 0; i < 4000; ++i) {
    auto c = model->draw_cells(rng);
    m0 += c[0];
    m1 += c[1];
  }
  CHECK(m0 / 4000 == doctest::Approx(0.75).epsilon(0.03));
  CHECK(m1 / 4000 == doctest::Approx(1.0 / 3.0).epsilon(0.05));
  CHECK(model->clone_prior()->draw_cells(rng).size() == 2);
  CHECK_THROWS_AS(model->observe(std::vector<Observation>{{0, 0.5}}), std::invalid_argument);

  ModelSpec hier;
  hier.family = ModelFamily::logit_hier;
  hier.mcmc.warmup = 50;
  hier.refresh_every = 3;
  auto hm = make_model(hier, 1, 2);
  const auto th = sample_theta(*hm, TypeStructure::grid(1, 2), rng);
  CHECK(th.size() == 2);
  CHECK_THROWS_AS(sample_theta(*hm, TypeStructure::identity(3), rng), std::invalid_argument);
  CHECK(parse_model_family(to_string(ModelFamily::beta_binomial_hier)) ==
        ModelFamily::beta_binomial_hier);
}
