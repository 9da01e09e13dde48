#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "combibandit/domain.hpp"
#include "combibandit/rng.hpp"

namespace combibandit {

enum class ModelFamily { beta_bernoulli, gaussian_hier, logit_hier, beta_binomial_hier };

std::string to_string(ModelFamily family);
ModelFamily parse_model_family(std::string_view name);

// ---------------------------------------------------------------------------
// Conjugate Beta-Bernoulli baseline

struct BetaBernoulliState {
  std::vector<double> alpha;
  std::vector<double> beta;
  // Prior each option started from; pooling subtracts it once per option.
  double prior_alpha = 1.0;
  double prior_beta = 1.0;

  static BetaBernoulliState uniform(std::size_t d, double a = 1.0, double b = 1.0);
};

// alpha += y, beta += 1 - y on observed entries. Throws std::invalid_argument
// for a non-binary observed outcome or a size mismatch.
BetaBernoulliState beta_bernoulli_update(BetaBernoulliState state,
                                         const ActionVector& action,
                                         const OutcomeVector& outcomes);

// One Beta draw per (u, v) cell from the counts pooled over that cell's
// options, broadcast back to the options.
ThetaVector sample_theta_beta_bernoulli(const BetaBernoulliState& state,
                                        const TypeStructure& types, Rng& rng);

double sample_beta(double a, double b, Rng& rng);

// ---------------------------------------------------------------------------
// Hierarchical models: theta_j = link(G^u[u_j] + G^v[v_j] + G^uv[u_j, v_j])

// Hyperpriors and optional fixed values. Defaults: mu ~ N(0, 5^2),
// tau ~ half-normal(2.5) for each effect block, sigma ~ half-normal(2.5),
// dispersion ~ log-normal(0, 1).
struct HierarchicalPrior {
  bool row_effects = true;
  bool col_effects = true;
  double mu_sd = 5.0;
  double tau_scale = 2.5;
  double sigma_scale = 2.5;
  double dispersion_log_mean = 0.0;
  double dispersion_log_sd = 1.0;
  // Support bound for Beta-Binomial outcomes; observations arrive as y / y_bar.
  int y_bar = 1;

  std::optional<double> fixed_mu;
  std::optional<double> fixed_tau_u_sq;
  std::optional<double> fixed_tau_v_sq;
  std::optional<double> fixed_tau_uv_sq;
  std::optional<double> fixed_sigma_sq;
  std::optional<double> fixed_dispersion;
};

// Chain state.
struct HierarchicalParams {
  std::vector<double> gamma_u;
  std::vector<double> gamma_v;
  std::vector<double> gamma_uv;  // row-major k_u x k_v
  double mu = 0.0;
  double tau_u_sq = 1.0;
  double tau_v_sq = 1.0;
  double tau_uv_sq = 1.0;
  double sigma_sq = 1.0;
  double dispersion = 1.0;
  int y_bar = 1;

  double linear_predictor(std::size_t u, std::size_t v) const {
    return gamma_u[u] + gamma_v[v] + gamma_uv[u * gamma_v.size() + v];
  }
};

struct McmcSettings {
  std::size_t warmup = 2000;
  std::size_t thin = 1;
  // Random-walk step sizes adapt toward this acceptance rate during warm-up.
  double target_accept = 0.35;
};

// Gibbs (Gaussian) or Metropolis-within-Gibbs (logit, Beta-Binomial) sampler
// over one k_u x k_v cell grid. Holds its own chain state across runs.
class HierarchicalSampler {
 public:
  HierarchicalSampler(ModelFamily family, std::size_t k_u, std::size_t k_v,
                      HierarchicalPrior prior, McmcSettings settings = {});
  ~HierarchicalSampler();
  HierarchicalSampler(HierarchicalSampler&&) noexcept;
  HierarchicalSampler& operator=(HierarchicalSampler&&) noexcept;

  // Throws std::invalid_argument for outcomes outside the model's support.
  void add(std::span<const Observation> observations);
  std::size_t observation_count() const;

  // Warm-up (with step adaptation) then n_draws thinned sweeps. Each draw
  // holds one raw theta per cell.
  std::vector<std::vector<double>> run(std::size_t n_draws, Rng& rng);

  const HierarchicalParams& state() const;
  // Post-warm-up acceptance rates of the last run, keyed by block.
  std::map<std::string, double> acceptance() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct PosteriorDraws {
  // One raw value per option per draw. Gaussian draws may leave [0,1].
  std::vector<std::vector<double>> draws;
  ModelFamily model = ModelFamily::beta_bernoulli;
  std::map<std::string, double> chain_diagnostics;

  std::size_t size() const { return draws.size(); }
  // Clipped to [0,1] for use as a solver input.
  ThetaVector theta(std::size_t i) const { return ThetaVector::clipped(draws[i]); }
  std::vector<double> option_series(std::size_t j) const;
};

PosteriorDraws mcmc_sample(ModelFamily family, std::span<const Observation> observations,
                           const TypeStructure& types, const HierarchicalPrior& prior,
                           std::size_t n_draws, const McmcSettings& settings, Rng& rng);

PosteriorDraws mcmc_sample_gaussian(const History& history, const TypeStructure& types,
                                    const HierarchicalPrior& prior, std::size_t n_draws,
                                    const McmcSettings& settings, Rng& rng);
PosteriorDraws mcmc_sample_logit(const History& history, const TypeStructure& types,
                                 const HierarchicalPrior& prior, std::size_t n_draws,
                                 const McmcSettings& settings, Rng& rng);
PosteriorDraws mcmc_sample_beta_binomial(const History& history, const TypeStructure& types,
                                         const HierarchicalPrior& prior, std::size_t n_draws,
                                         const McmcSettings& settings, Rng& rng);

// Empirical alpha/2 and 1 - alpha/2 quantiles (linear interpolation) of
// option j's draws, alpha = 1 - level.
std::pair<double, double> credible_interval(const PosteriorDraws& draws,
                                            std::size_t option, double level);

// Linear-interpolation sample quantile.
double quantile(std::vector<double> values, double q);

// Effective sample size from the autocorrelation function (Geyer's initial
// positive sequence).
double effective_sample_size(std::span<const double> chain);

// CSV: draw_index,option_index,theta (one-based indices, raw values).
void write_draws_csv(std::ostream& out, const PosteriorDraws& draws);
// key=value lines.
void write_diagnostics(std::ostream& out, const PosteriorDraws& draws);

// ---------------------------------------------------------------------------
// Model interface used by the Thompson loop

struct ModelSpec {
  ModelFamily family = ModelFamily::beta_bernoulli;
  double prior_alpha = 1.0;
  double prior_beta = 1.0;
  HierarchicalPrior hierarchical;
  McmcSettings mcmc;
  // Hierarchical models refit every `refresh_every` draws and serve the
  // cached draw set in between.
  std::size_t refresh_every = 1;
};

class PosteriorModel {
 public:
  virtual ~PosteriorModel() = default;
  virtual ModelFamily family() const = 0;
  virtual std::size_t cells() const = 0;
  virtual void observe(std::span<const Observation> observations) = 0;
  // One joint posterior draw with a raw value per cell.
  virtual std::vector<double> draw_cells(Rng& rng) = 0;
  virtual std::unique_ptr<PosteriorModel> clone_prior() const = 0;
};

std::unique_ptr<PosteriorModel> make_model(const ModelSpec& spec, std::size_t k_u,
                                           std::size_t k_v);

// Conjugate model over cells with explicit starting counts (for tests and
// for resuming from a known state).
std::unique_ptr<PosteriorModel> make_beta_bernoulli_model(std::vector<double> alpha,
                                                          std::vector<double> beta);

// Draws cells and broadcasts them to options, clipped to [0,1].
ThetaVector sample_theta(PosteriorModel& model, const TypeStructure& types, Rng& rng);

}  // namespace combibandit
