#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <string>

#include "combibandit/posterior.hpp"

namespace combibandit {

namespace {

double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);  // std::lgamma writes a global
#else
  return std::lgamma(x);
#endif
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Random-walk proposal scale for one scalar, tuned in batches during warm-up.
struct Walker {
  double log_step = 0.0;
  std::size_t batch_tries = 0;
  std::size_t batch_accepts = 0;
  std::size_t batches = 0;
  std::size_t tries = 0;
  std::size_t accepts = 0;
};

constexpr std::size_t kBatch = 50;

template <class F>
void metropolis(double& x, double scale, Walker& w, F&& log_target, Rng& rng,
                bool warm, double target_accept) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const double prop = x + std::exp(w.log_step) * scale * z(rng);
  const double diff = log_target(prop) - log_target(x);
  const bool ok = std::log(u(rng)) < diff;
  if (ok) x = prop;
  if (warm) {
    ++w.batch_tries;
    w.batch_accepts += ok;
    if (w.batch_tries == kBatch) {
      const double rate = static_cast<double>(w.batch_accepts) / kBatch;
      ++w.batches;
      w.log_step += (rate - target_accept) * 2.0 / std::sqrt(static_cast<double>(w.batches));
      w.log_step = std::clamp(w.log_step, -20.0, 5.0);
      w.batch_tries = w.batch_accepts = 0;
    }
  } else {
    ++w.tries;
    w.accepts += ok;
  }
}

// Stepping-out and shrinkage slice sampler for a scalar.
template <class F>
double slice(double x0, F&& log_f, Rng& rng, double width = 1.0, int max_steps = 50) {
  std::uniform_real_distribution<double> u;
  std::exponential_distribution<double> e;
  const double level = log_f(x0) - e(rng);
  double lo = x0 - width * u(rng);
  double hi = lo + width;
  int j = static_cast<int>(max_steps * u(rng));
  int k = max_steps - 1 - j;
  while (j-- > 0 && log_f(lo) > level) lo -= width;
  while (k-- > 0 && log_f(hi) > level) hi += width;
  for (int guard = 0; guard < 200; ++guard) {
    const double x1 = lo + (hi - lo) * u(rng);
    if (log_f(x1) > level) return x1;
    (x1 < x0 ? lo : hi) = x1;
  }
  return x0;
}

// Log-scale slice update of a variance given `count` zero-centered normal
// residuals with squared sum `ss` and a half-normal(scale) prior on its root.
double update_variance(double var, double count, double ss, double scale, Rng& rng) {
  auto log_f = [&](double l) {
    const double e2 = std::exp(2.0 * l);
    return -(count - 1.0) * l - 0.5 * ss / e2 - 0.5 * e2 / (scale * scale);
  };
  const double l = slice(0.5 * std::log(var), log_f, rng);
  return std::max(std::exp(2.0 * l), 1e-300);
}

double mean_rate(const std::vector<Walker>& ws) {
  std::size_t t = 0, a = 0;
  for (const auto& w : ws) {
    t += w.tries;
    a += w.accepts;
  }
  return t == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(t);
}

}  // namespace

struct HierarchicalSampler::Impl {
  ModelFamily family;
  std::size_t ku, kv;
  HierarchicalPrior prior;
  McmcSettings settings;
  HierarchicalParams p;

  std::vector<double> n, sum, sumsq;
  std::vector<std::vector<double>> hist;  // Beta-Binomial counts per y
  std::size_t n_obs = 0;

  std::vector<Walker> walk_u, walk_v, walk_uv;
  Walker walk_disp;

  bool gaussian() const { return family == ModelFamily::gaussian_hier; }

  double cell_loglik(std::size_t c, double eta, double disp) const {
    if (n[c] == 0) return 0.0;
    if (family == ModelFamily::logit_hier) return sum[c] * eta - n[c] * softplus(eta);
    const double th = std::clamp(logistic(eta), 1e-15, 1.0 - 1e-15);
    const double a = disp * th, b = disp * (1.0 - th);
    const double yb = p.y_bar;
    const double norm = log_gamma(a) + log_gamma(b) - log_gamma(a + b);
    const double total = log_gamma(yb + disp);
    double ll = 0.0;
    for (std::size_t y = 0; y < hist[c].size(); ++y) {
      if (hist[c][y] == 0) continue;
      ll += hist[c][y] * (log_gamma(y + a) + log_gamma(yb - y + b) - total - norm);
    }
    return ll;
  }

  double gauss_ss(std::size_t c, double eta) const {
    return sumsq[c] - 2.0 * eta * sum[c] + n[c] * eta * eta;
  }

  void sweep(Rng& rng, bool warm) {
    std::normal_distribution<double> z;
    const double target = settings.target_accept;
    auto cell = [&](std::size_t u, std::size_t v) { return u * kv + v; };

    if (prior.row_effects) {
      for (std::size_t u = 0; u < ku; ++u) {
        if (gaussian()) {
          double prec = 1.0 / p.tau_u_sq, lin = 0.0;
          for (std::size_t v = 0; v < kv; ++v) {
            const auto c = cell(u, v);
            prec += n[c] / p.sigma_sq;
            lin += (sum[c] - n[c] * (p.gamma_v[v] + p.gamma_uv[c])) / p.sigma_sq;
          }
          p.gamma_u[u] = lin / prec + z(rng) / std::sqrt(prec);
        } else {
          auto lt = [&](double g) {
            double l = -0.5 * g * g / p.tau_u_sq;
            for (std::size_t v = 0; v < kv; ++v) {
              const auto c = cell(u, v);
              l += cell_loglik(c, g + p.gamma_v[v] + p.gamma_uv[c], p.dispersion);
            }
            return l;
          };
          metropolis(p.gamma_u[u], std::sqrt(p.tau_u_sq), walk_u[u], lt, rng, warm, target);
        }
      }
    }
    if (prior.col_effects) {
      for (std::size_t v = 0; v < kv; ++v) {
        if (gaussian()) {
          double prec = 1.0 / p.tau_v_sq, lin = 0.0;
          for (std::size_t u = 0; u < ku; ++u) {
            const auto c = cell(u, v);
            prec += n[c] / p.sigma_sq;
            lin += (sum[c] - n[c] * (p.gamma_u[u] + p.gamma_uv[c])) / p.sigma_sq;
          }
          p.gamma_v[v] = lin / prec + z(rng) / std::sqrt(prec);
        } else {
          auto lt = [&](double g) {
            double l = -0.5 * g * g / p.tau_v_sq;
            for (std::size_t u = 0; u < ku; ++u) {
              const auto c = cell(u, v);
              l += cell_loglik(c, p.gamma_u[u] + g + p.gamma_uv[c], p.dispersion);
            }
            return l;
          };
          metropolis(p.gamma_v[v], std::sqrt(p.tau_v_sq), walk_v[v], lt, rng, warm, target);
        }
      }
    }
    for (std::size_t u = 0; u < ku; ++u) {
      for (std::size_t v = 0; v < kv; ++v) {
        const auto c = cell(u, v);
        const double base = p.gamma_u[u] + p.gamma_v[v];
        if (gaussian()) {
          const double prec = 1.0 / p.tau_uv_sq + n[c] / p.sigma_sq;
          const double lin = p.mu / p.tau_uv_sq + (sum[c] - n[c] * base) / p.sigma_sq;
          p.gamma_uv[c] = lin / prec + z(rng) / std::sqrt(prec);
        } else {
          auto lt = [&](double g) {
            const double d = g - p.mu;
            return -0.5 * d * d / p.tau_uv_sq + cell_loglik(c, base + g, p.dispersion);
          };
          metropolis(p.gamma_uv[c], std::sqrt(p.tau_uv_sq), walk_uv[c], lt, rng, warm, target);
        }
      }
    }

    const double cells = static_cast<double>(ku * kv);
    if (!prior.fixed_mu) {
      double s = 0.0;
      for (double g : p.gamma_uv) s += g;
      const double prec = 1.0 / (prior.mu_sd * prior.mu_sd) + cells / p.tau_uv_sq;
      p.mu = (s / p.tau_uv_sq) / prec + z(rng) / std::sqrt(prec);
    }
    auto sq = [](const std::vector<double>& g, double centre) {
      double s = 0.0;
      for (double x : g) s += (x - centre) * (x - centre);
      return s;
    };
    if (prior.row_effects && !prior.fixed_tau_u_sq) {
      p.tau_u_sq = update_variance(p.tau_u_sq, static_cast<double>(ku), sq(p.gamma_u, 0.0),
                                   prior.tau_scale, rng);
    }
    if (prior.col_effects && !prior.fixed_tau_v_sq) {
      p.tau_v_sq = update_variance(p.tau_v_sq, static_cast<double>(kv), sq(p.gamma_v, 0.0),
                                   prior.tau_scale, rng);
    }
    if (!prior.fixed_tau_uv_sq) {
      p.tau_uv_sq = update_variance(p.tau_uv_sq, cells, sq(p.gamma_uv, p.mu), prior.tau_scale, rng);
    }
    if (gaussian() && !prior.fixed_sigma_sq) {
      double ss = 0.0;
      for (std::size_t u = 0; u < ku; ++u) {
        for (std::size_t v = 0; v < kv; ++v) ss += gauss_ss(cell(u, v), p.linear_predictor(u, v));
      }
      p.sigma_sq = update_variance(p.sigma_sq, static_cast<double>(n_obs), std::max(ss, 0.0),
                                   prior.sigma_scale, rng);
    }
    if (family == ModelFamily::beta_binomial_hier && !prior.fixed_dispersion) {
      double l = std::log(p.dispersion);
      auto lt = [&](double x) {
        const double d = (x - prior.dispersion_log_mean) / prior.dispersion_log_sd;
        double ll = -0.5 * d * d;
        const double disp = std::exp(x);
        for (std::size_t u = 0; u < ku; ++u) {
          for (std::size_t v = 0; v < kv; ++v) {
            ll += cell_loglik(cell(u, v), p.linear_predictor(u, v), disp);
          }
        }
        return ll;
      };
      metropolis(l, 1.0, walk_disp, lt, rng, warm, target);
      p.dispersion = std::exp(l);
    }
  }

  std::vector<double> cell_thetas() const {
    std::vector<double> out(ku * kv);
    for (std::size_t u = 0; u < ku; ++u) {
      for (std::size_t v = 0; v < kv; ++v) {
        const double eta = p.linear_predictor(u, v);
        out[u * kv + v] =
            gaussian() ? eta : std::clamp(logistic(eta), DBL_MIN, std::nextafter(1.0, 0.0));
      }
    }
    return out;
  }
};

HierarchicalSampler::HierarchicalSampler(ModelFamily family, std::size_t k_u, std::size_t k_v,
                                         HierarchicalPrior prior, McmcSettings settings)
    : impl_(std::make_unique<Impl>()) {
  if (family == ModelFamily::beta_bernoulli) {
    throw std::invalid_argument("HierarchicalSampler needs a hierarchical model family");
  }
  if (k_u == 0 || k_v == 0) throw std::invalid_argument("empty type grid");
  if (settings.thin == 0) throw std::invalid_argument("thin must be positive");
  if (family == ModelFamily::beta_binomial_hier && prior.y_bar < 1) {
    throw std::invalid_argument("y_bar must be a positive integer");
  }
  auto positive = [](const std::optional<double>& x, const char* what) {
    if (x && !(*x > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
  };
  positive(prior.fixed_tau_u_sq, "tau_u_sq");
  positive(prior.fixed_tau_v_sq, "tau_v_sq");
  positive(prior.fixed_tau_uv_sq, "tau_uv_sq");
  positive(prior.fixed_sigma_sq, "sigma_sq");
  positive(prior.fixed_dispersion, "dispersion");
  if (!(prior.mu_sd > 0 && prior.tau_scale > 0 && prior.sigma_scale > 0 &&
        prior.dispersion_log_sd > 0)) {
    throw std::invalid_argument("hyperprior scales must be positive");
  }

  auto& s = *impl_;
  s.family = family;
  s.ku = k_u;
  s.kv = k_v;
  s.prior = prior;
  s.settings = settings;
  const std::size_t cells = k_u * k_v;
  s.n.assign(cells, 0.0);
  s.sum.assign(cells, 0.0);
  s.sumsq.assign(cells, 0.0);
  if (family == ModelFamily::beta_binomial_hier) {
    s.hist.assign(cells, std::vector<double>(static_cast<std::size_t>(prior.y_bar) + 1, 0.0));
  }
  s.walk_u.resize(k_u);
  s.walk_v.resize(k_v);
  s.walk_uv.resize(cells);

  auto& p = s.p;
  p.mu = prior.fixed_mu.value_or(0.0);
  p.gamma_u.assign(k_u, 0.0);
  p.gamma_v.assign(k_v, 0.0);
  p.gamma_uv.assign(cells, p.mu);
  p.tau_u_sq = prior.fixed_tau_u_sq.value_or(1.0);
  p.tau_v_sq = prior.fixed_tau_v_sq.value_or(1.0);
  p.tau_uv_sq = prior.fixed_tau_uv_sq.value_or(1.0);
  p.sigma_sq = prior.fixed_sigma_sq.value_or(1.0);
  p.dispersion = prior.fixed_dispersion.value_or(std::exp(prior.dispersion_log_mean));
  p.y_bar = prior.y_bar;
}

HierarchicalSampler::~HierarchicalSampler() = default;
HierarchicalSampler::HierarchicalSampler(HierarchicalSampler&&) noexcept = default;
HierarchicalSampler& HierarchicalSampler::operator=(HierarchicalSampler&&) noexcept = default;

void HierarchicalSampler::add(std::span<const Observation> observations) {
  auto& s = *impl_;
  // Validate the whole batch before touching the sufficient statistics.
  for (const auto& o : observations) {
    if (o.cell >= s.ku * s.kv) throw std::invalid_argument("observation cell out of range");
    if (!std::isfinite(o.value)) throw std::invalid_argument("outcome is not finite");
    if (s.family == ModelFamily::logit_hier && o.value != 0.0 && o.value != 1.0) {
      throw std::invalid_argument("logit model needs binary outcomes");
    }
    if (s.family == ModelFamily::beta_binomial_hier) {
      const double y = o.value * s.p.y_bar;
      if (y < -1e-9 || y > s.p.y_bar + 1e-9 || std::abs(y - std::round(y)) > 1e-9) {
        throw std::invalid_argument("outcome outside the Beta-Binomial support");
      }
    }
  }
  for (const auto& o : observations) {
    s.n[o.cell] += 1.0;
    if (s.family == ModelFamily::beta_binomial_hier) {
      s.hist[o.cell][static_cast<std::size_t>(std::lround(o.value * s.p.y_bar))] += 1.0;
    } else {
      s.sum[o.cell] += o.value;
      s.sumsq[o.cell] += o.value * o.value;
    }
    ++s.n_obs;
  }
}

std::size_t HierarchicalSampler::observation_count() const { return impl_->n_obs; }

std::vector<std::vector<double>> HierarchicalSampler::run(std::size_t n_draws, Rng& rng) {
  auto& s = *impl_;
  auto reset = [](std::vector<Walker>& ws) {
    for (auto& w : ws) w.tries = w.accepts = w.batch_tries = w.batch_accepts = 0;
  };
  reset(s.walk_u);
  reset(s.walk_v);
  reset(s.walk_uv);
  s.walk_disp.tries = s.walk_disp.accepts = s.walk_disp.batch_tries = s.walk_disp.batch_accepts = 0;

  for (std::size_t i = 0; i < s.settings.warmup; ++i) s.sweep(rng, true);
  std::vector<std::vector<double>> out;
  out.reserve(n_draws);
  for (std::size_t i = 0; i < n_draws * s.settings.thin; ++i) {
    s.sweep(rng, false);
    if ((i + 1) % s.settings.thin == 0) out.push_back(s.cell_thetas());
  }
  return out;
}

const HierarchicalParams& HierarchicalSampler::state() const { return impl_->p; }

std::map<std::string, double> HierarchicalSampler::acceptance() const {
  const auto& s = *impl_;
  std::map<std::string, double> out;
  if (s.gaussian()) return out;
  if (s.prior.row_effects) out["accept_gamma_u"] = mean_rate(s.walk_u);
  if (s.prior.col_effects) out["accept_gamma_v"] = mean_rate(s.walk_v);
  out["accept_gamma_uv"] = mean_rate(s.walk_uv);
  if (s.family == ModelFamily::beta_binomial_hier && !s.prior.fixed_dispersion) {
    out["accept_dispersion"] = mean_rate({s.walk_disp});
  }
  return out;
}

}  // namespace combibandit
