#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the solver or sampler code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Sums theta over `picked` option indices in ascending order.
inline double sum_sorted(const std::vector<double>& theta,
                         std::vector<std::size_t> picked) {
  std::sort(picked.begin(), picked.end());
  double total = 0.0;
  for (auto j : picked) total += theta[j];
  return total;
}

// Best value over all size-m subsets (bitmask walk, d <= 30).
inline double best_top_m(const std::vector<double>& theta, std::size_t m) {
  const std::size_t d = theta.size();
  double best = kNegInf;
  for (unsigned long mask = 0; mask < (1UL << d); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountl(mask)) != m) continue;
    std::vector<std::size_t> picked;
    for (std::size_t j = 0; j < d; ++j) {
      if (mask >> j & 1UL) picked.push_back(j);
    }
    best = std::max(best, sum_sorted(theta, picked));
  }
  return best;
}

// Best perfect matching over all k! permutations; values row-major.
inline double best_assignment(const std::vector<double>& values, std::size_t k) {
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = kNegInf;
  do {
    std::vector<std::size_t> picked;
    for (std::size_t r = 0; r < k; ++r) picked.push_back(r * k + perm[r]);
    best = std::max(best, sum_sorted(values, picked));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Walks every map item -> {0..choices-1} (mixed radix counter).
inline void for_each_assignment(std::size_t items, std::size_t choices,
                                const std::function<void(const std::vector<std::size_t>&)>& f) {
  std::vector<std::size_t> digits(items, 0);
  while (true) {
    f(digits);
    std::size_t i = 0;
    while (i < items && ++digits[i] == choices) digits[i++] = 0;
    if (i == items) break;
  }
}

// Every item placed on exactly one node; NaN-free -inf when none feasible.
inline double best_capacitated(const std::vector<double>& theta, std::size_t items,
                               const std::vector<int>& caps) {
  const std::size_t r = caps.size();
  double best = kNegInf;
  for_each_assignment(items, r, [&](const std::vector<std::size_t>& to) {
    std::vector<int> load(r, 0);
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < items; ++i) {
      ++load[to[i]];
      picked.push_back(i * r + to[i]);
    }
    for (std::size_t k = 0; k < r; ++k) {
      if (load[k] > caps[k]) return;
    }
    best = std::max(best, sum_sorted(theta, picked));
  });
  return best;
}

// Choice r means "left unassigned".
inline double best_knapsack(const std::vector<double>& theta,
                            const std::vector<int>& weights,
                            const std::vector<int>& caps) {
  const std::size_t r = caps.size();
  const std::size_t n = weights.size();
  double best = kNegInf;
  for_each_assignment(n, r + 1, [&](const std::vector<std::size_t>& to) {
    std::vector<long> load(r, 0);
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < n; ++i) {
      if (to[i] == r) continue;
      load[to[i]] += weights[i];
      picked.push_back(i * r + to[i]);
    }
    for (std::size_t k = 0; k < r; ++k) {
      if (load[k] > caps[k]) return;
    }
    best = std::max(best, sum_sorted(theta, picked));
  });
  return best;
}

// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-14) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// One-sample KS p-value against Uniform(0,1).
inline double ks_uniform_pvalue(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d = std::max({d, (i + 1) / n - x[i], x[i] - i / n});
  }
  const double sn = std::sqrt(n);
  return kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
}

// Two-sample KS p-value (asymptotic with the usual small-sample correction).
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
}

// Trapezoid rule on a uniform grid of `points` nodes over [lo, hi].
inline double trapezoid(const std::function<double(double)>& f, double lo,
                        double hi, std::size_t points) {
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double s = 0.5 * (f(lo) + f(hi));
  for (std::size_t i = 1; i + 1 < points; ++i) s += f(lo + h * i);
  return s * h;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Posterior mean of logistic(g) for g ~ N(mu, tau^2) prior and binomial data,
// by 1-D quadrature on a 10,000-point grid.
inline double logit_posterior_mean_quadrature(double mu, double tau,
                                              double successes, double trials,
                                              std::size_t points = 10000) {
  auto log_post = [&](double g) {
    const double z = (g - mu) / tau;
    return -0.5 * z * z + successes * g - trials * std::log1p(std::exp(g));
  };
  const double lo = mu - 12.0 * tau, hi = mu + 12.0 * tau;
  // Shift by the grid maximum for numerical safety.
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points; ++i) {
    peak = std::max(peak, log_post(lo + (hi - lo) * i / (points - 1.0)));
  }
  const double z = trapezoid([&](double g) { return std::exp(log_post(g) - peak); }, lo, hi, points);
  const double m = trapezoid(
      [&](double g) { return logistic(g) * std::exp(log_post(g) - peak); }, lo, hi, points);
  return m / z;
}

// Same for a Beta-Binomial likelihood with fixed dispersion and support bound;
// hist[y] counts observations equal to y.
inline double beta_binomial_posterior_mean_quadrature(double mu, double tau, double dispersion,
                                                      const std::vector<double>& hist,
                                                      std::size_t points = 10000) {
  const double y_bar = static_cast<double>(hist.size() - 1);
  auto lbeta = [](double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); };
  auto log_post = [&](double g) {
    const double z = (g - mu) / tau;
    const double th = logistic(g);
    const double a = dispersion * th, b = dispersion * (1.0 - th);
    double ll = -0.5 * z * z;
    for (std::size_t y = 0; y < hist.size(); ++y) {
      if (hist[y] == 0) continue;
      ll += hist[y] * (lbeta(y + a, y_bar - y + b) - lbeta(a, b));
    }
    return ll;
  };
  const double lo = mu - 12.0 * tau, hi = mu + 12.0 * tau;
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points; ++i) {
    peak = std::max(peak, log_post(lo + (hi - lo) * i / (points - 1.0)));
  }
  const double z = trapezoid([&](double g) { return std::exp(log_post(g) - peak); }, lo, hi, points);
  const double m = trapezoid(
      [&](double g) { return logistic(g) * std::exp(log_post(g) - peak); }, lo, hi, points);
  return m / z;
}

// P(X > Y) for independent Beta(a1,b1), Beta(a2,b2) by 2-D midpoint rule.
inline double prob_beta_greater(double a1, double b1, double a2, double b2,
                                std::size_t n = 2000) {
  auto pdf = [](double x, double a, double b) {
    return std::exp((a - 1) * std::log(x) + (b - 1) * std::log1p(-x) -
                    (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)));
  };
  const double h = 1.0 / n;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (i + 0.5) * h;
    double inner = 0.0;
    // Cells below the diagonal count fully, the diagonal cell half.
    for (std::size_t j = 0; j < i; ++j) inner += pdf((j + 0.5) * h, a2, b2);
    inner += 0.5 * pdf(x, a2, b2);
    total += pdf(x, a1, b1) * inner * h;
  }
  return total * h;
}

// Linear-interpolation sample quantile (type 7).
inline double quantile_type7(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  const double h = (x.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - lo) * (x[hi] - x[lo]);
}

// Batch-means Monte Carlo standard error of the mean.
inline double batch_means_se(const std::vector<double>& x, std::size_t batches = 50) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += x[b * len + i];
    means.push_back(s / len);
  }
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) / batches;
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  return std::sqrt(ss / (batches - 1) / batches);
}

inline double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace oracle
