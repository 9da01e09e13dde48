#include "combibandit/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace combibandit {

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::beta_bernoulli: return "beta_bernoulli";
    case ModelFamily::gaussian_hier: return "gaussian";
    case ModelFamily::logit_hier: return "logit";
    case ModelFamily::beta_binomial_hier: return "beta_binomial";
  }
  return "unknown";
}

ModelFamily parse_model_family(std::string_view name) {
  if (name == "beta_bernoulli") return ModelFamily::beta_bernoulli;
  if (name == "gaussian") return ModelFamily::gaussian_hier;
  if (name == "logit") return ModelFamily::logit_hier;
  if (name == "beta_binomial") return ModelFamily::beta_binomial_hier;
  throw std::invalid_argument("unknown model family '" + std::string(name) + "'");
}

BetaBernoulliState BetaBernoulliState::uniform(std::size_t d, double a, double b) {
  if (!(a > 0 && b > 0)) throw std::invalid_argument("Beta prior parameters must be positive");
  return BetaBernoulliState{std::vector<double>(d, a), std::vector<double>(d, b), a, b};
}

BetaBernoulliState beta_bernoulli_update(BetaBernoulliState state,
                                         const ActionVector& action,
                                         const OutcomeVector& outcomes) {
  const std::size_t d = state.alpha.size();
  if (action.size() != d || outcomes.size() != d || state.beta.size() != d) {
    throw std::invalid_argument("state, action and outcomes differ in size");
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (!outcomes[j]) continue;
    const double y = *outcomes[j];
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("Beta-Bernoulli needs binary outcomes");
    state.alpha[j] += y;
    state.beta[j] += 1.0 - y;
  }
  return state;
}

double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng), y = gb(rng);
  if (x + y == 0.0) return a / (a + b);
  return x / (x + y);
}

namespace {

// Pools option counts per cell: prior + sum of each option's increments.
std::pair<std::vector<double>, std::vector<double>> pooled(const BetaBernoulliState& state,
                                                           const TypeStructure& types) {
  if (state.alpha.size() != types.options() || state.beta.size() != types.options()) {
    throw std::invalid_argument("state and type structure differ in size");
  }
  std::vector<double> a(types.cells(), state.prior_alpha), b(types.cells(), state.prior_beta);
  for (std::size_t j = 0; j < types.options(); ++j) {
    a[types.cell_of(j)] += state.alpha[j] - state.prior_alpha;
    b[types.cell_of(j)] += state.beta[j] - state.prior_beta;
  }
  return {a, b};
}

}  // namespace

ThetaVector sample_theta_beta_bernoulli(const BetaBernoulliState& state,
                                        const TypeStructure& types, Rng& rng) {
  auto [a, b] = pooled(state, types);
  std::vector<double> cell(types.cells());
  for (std::size_t c = 0; c < cell.size(); ++c) cell[c] = sample_beta(a[c], b[c], rng);
  return ThetaVector(types.broadcast(cell));
}

std::vector<double> PosteriorDraws::option_series(std::size_t j) const {
  std::vector<double> out;
  out.reserve(draws.size());
  for (const auto& d : draws) out.push_back(d.at(j));
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

std::pair<double, double> credible_interval(const PosteriorDraws& draws, std::size_t option,
                                            double level) {
  if (draws.size() < 2) throw std::invalid_argument("credible interval needs at least 2 draws");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0,1)");
  auto series = draws.option_series(option);
  const double alpha = 1.0 - level;
  return {quantile(series, alpha / 2.0), quantile(series, 1.0 - alpha / 2.0)};
}

double effective_sample_size(std::span<const double> chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / n;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = chain[i] - mean;
  double c0 = 0.0;
  for (double v : x) c0 += v * v;
  if (c0 <= 0.0) return static_cast<double>(n);
  auto rho = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += x[i] * x[i + lag];
    return s / c0;
  };
  double tau = -1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    tau += 2.0 * pair;
  }
  return n / std::max(tau, 1e-12);
}

void write_draws_csv(std::ostream& out, const PosteriorDraws& draws) {
  out << "draw_index,option_index,theta\n";
  for (std::size_t i = 0; i < draws.draws.size(); ++i) {
    for (std::size_t j = 0; j < draws.draws[i].size(); ++j) {
      out << (i + 1) << ',' << (j + 1) << ',' << format_double(draws.draws[i][j]) << '\n';
    }
  }
}

void write_diagnostics(std::ostream& out, const PosteriorDraws& draws) {
  out << "model=" << to_string(draws.model) << '\n';
  out << "draws=" << draws.size() << '\n';
  for (const auto& [k, v] : draws.chain_diagnostics) out << k << '=' << format_double(v) << '\n';
}

PosteriorDraws mcmc_sample(ModelFamily family, std::span<const Observation> observations,
                           const TypeStructure& types, const HierarchicalPrior& prior,
                           std::size_t n_draws, const McmcSettings& settings, Rng& rng) {
  HierarchicalSampler sampler(family, types.k_u(), types.k_v(), prior, settings);
  sampler.add(observations);
  PosteriorDraws out;
  out.model = family;
  for (const auto& cells : sampler.run(n_draws, rng)) out.draws.push_back(types.broadcast(cells));
  out.chain_diagnostics = sampler.acceptance();
  if (out.size() >= 4) {
    double lo = std::numeric_limits<double>::infinity(), total = 0.0;
    for (std::size_t j = 0; j < types.options(); ++j) {
      const auto series = out.option_series(j);
      const double ess = effective_sample_size(series);
      lo = std::min(lo, ess);
      total += ess;
    }
    if (types.options() > 0) {
      out.chain_diagnostics["ess_min"] = lo;
      out.chain_diagnostics["ess_mean"] = total / types.options();
    }
  }
  out.chain_diagnostics["warmup"] = static_cast<double>(settings.warmup);
  out.chain_diagnostics["thin"] = static_cast<double>(settings.thin);
  return out;
}

PosteriorDraws mcmc_sample_gaussian(const History& history, const TypeStructure& types,
                                    const HierarchicalPrior& prior, std::size_t n_draws,
                                    const McmcSettings& settings, Rng& rng) {
  return mcmc_sample(ModelFamily::gaussian_hier, history.observations(types), types, prior,
                     n_draws, settings, rng);
}

PosteriorDraws mcmc_sample_logit(const History& history, const TypeStructure& types,
                                 const HierarchicalPrior& prior, std::size_t n_draws,
                                 const McmcSettings& settings, Rng& rng) {
  return mcmc_sample(ModelFamily::logit_hier, history.observations(types), types, prior,
                     n_draws, settings, rng);
}

PosteriorDraws mcmc_sample_beta_binomial(const History& history, const TypeStructure& types,
                                         const HierarchicalPrior& prior, std::size_t n_draws,
                                         const McmcSettings& settings, Rng& rng) {
  return mcmc_sample(ModelFamily::beta_binomial_hier, history.observations(types), types, prior,
                     n_draws, settings, rng);
}

namespace {

class BetaBernoulliModel final : public PosteriorModel {
 public:
  BetaBernoulliModel(std::vector<double> alpha, std::vector<double> beta)
      : alpha_(std::move(alpha)), beta_(std::move(beta)), alpha0_(alpha_), beta0_(beta_) {
    if (alpha_.size() != beta_.size()) throw std::invalid_argument("alpha and beta differ in size");
    for (std::size_t c = 0; c < alpha_.size(); ++c) {
      if (!(alpha_[c] > 0 && beta_[c] > 0)) {
        throw std::invalid_argument("Beta parameters must be positive");
      }
    }
  }

  ModelFamily family() const override { return ModelFamily::beta_bernoulli; }
  std::size_t cells() const override { return alpha_.size(); }

  void observe(std::span<const Observation> obs) override {
    for (const auto& o : obs) {
      if (o.cell >= alpha_.size()) throw std::invalid_argument("observation cell out of range");
      if (o.value != 0.0 && o.value != 1.0) {
        throw std::invalid_argument("Beta-Bernoulli needs binary outcomes");
      }
    }
    for (const auto& o : obs) {
      alpha_[o.cell] += o.value;
      beta_[o.cell] += 1.0 - o.value;
    }
  }

  std::vector<double> draw_cells(Rng& rng) override {
    std::vector<double> out(alpha_.size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = sample_beta(alpha_[c], beta_[c], rng);
    return out;
  }

  std::unique_ptr<PosteriorModel> clone_prior() const override {
    return std::make_unique<BetaBernoulliModel>(alpha0_, beta0_);
  }

 private:
  std::vector<double> alpha_, beta_, alpha0_, beta0_;
};

class HierarchicalModel final : public PosteriorModel {
 public:
  HierarchicalModel(const ModelSpec& spec, std::size_t k_u, std::size_t k_v)
      : spec_(spec),
        k_u_(k_u),
        k_v_(k_v),
        sampler_(spec.family, k_u, k_v, spec.hierarchical, spec.mcmc) {
    if (spec.refresh_every == 0) throw std::invalid_argument("refresh_every must be positive");
  }

  ModelFamily family() const override { return spec_.family; }
  std::size_t cells() const override { return k_u_ * k_v_; }
  void observe(std::span<const Observation> obs) override { sampler_.add(obs); }

  std::vector<double> draw_cells(Rng& rng) override {
    if (next_ >= cache_.size()) {
      cache_ = sampler_.run(spec_.refresh_every, rng);
      next_ = 0;
    }
    return cache_[next_++];
  }

  std::unique_ptr<PosteriorModel> clone_prior() const override {
    return std::make_unique<HierarchicalModel>(spec_, k_u_, k_v_);
  }

 private:
  ModelSpec spec_;
  std::size_t k_u_, k_v_;
  HierarchicalSampler sampler_;
  std::vector<std::vector<double>> cache_;
  std::size_t next_ = 0;
};

}  // namespace

std::unique_ptr<PosteriorModel> make_model(const ModelSpec& spec, std::size_t k_u,
                                           std::size_t k_v) {
  if (spec.family == ModelFamily::beta_bernoulli) {
    const std::size_t cells = k_u * k_v;
    if (!(spec.prior_alpha > 0 && spec.prior_beta > 0)) {
      throw std::invalid_argument("Beta prior parameters must be positive");
    }
    return std::make_unique<BetaBernoulliModel>(std::vector<double>(cells, spec.prior_alpha),
                                                std::vector<double>(cells, spec.prior_beta));
  }
  return std::make_unique<HierarchicalModel>(spec, k_u, k_v);
}

std::unique_ptr<PosteriorModel> make_beta_bernoulli_model(std::vector<double> alpha,
                                                          std::vector<double> beta) {
  return std::make_unique<BetaBernoulliModel>(std::move(alpha), std::move(beta));
}

ThetaVector sample_theta(PosteriorModel& model, const TypeStructure& types, Rng& rng) {
  if (model.cells() != types.cells()) {
    throw std::invalid_argument("model and type structure disagree on the cell count");
  }
  const auto cells = model.draw_cells(rng);
  return ThetaVector::clipped(types.broadcast(cells));
}

}  // namespace combibandit
