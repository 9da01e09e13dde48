#include "combibandit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace combibandit {

namespace {

double xlogx_ratio(double p, double q) { return p == 0.0 ? 0.0 : p * std::log(p / q); }

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0,1]");
  }
}

}  // namespace

double bernoulli_entropy(double p) {
  check_probability(p, "entropy argument");
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

double bernoulli_kl(double p, double q) {
  check_probability(p, "p");
  check_probability(q, "q");
  if ((q == 0.0 || q == 1.0) && p != q) return kInfiniteDivergence;
  return std::max(0.0, xlogx_ratio(p, q) + xlogx_ratio(1.0 - p, 1.0 - q));
}

DiscreteJoint::DiscreteJoint(std::vector<std::vector<double>> pmf) : pmf_(std::move(pmf)) {
  if (pmf_.empty() || pmf_[0].empty()) throw std::invalid_argument("joint pmf is empty");
  double total = 0.0;
  for (const auto& row : pmf_) {
    if (row.size() != pmf_[0].size()) throw std::invalid_argument("joint pmf rows differ in length");
    for (double p : row) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw std::invalid_argument("joint pmf entries must be nonnegative");
      }
      total += p;
    }
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("joint pmf must sum to 1");
}

std::vector<double> DiscreteJoint::marginal_x() const {
  std::vector<double> out;
  for (const auto& row : pmf_) out.push_back(std::accumulate(row.begin(), row.end(), 0.0));
  return out;
}

std::vector<double> DiscreteJoint::marginal_y() const {
  std::vector<double> out(cols(), 0.0);
  for (const auto& row : pmf_) {
    for (std::size_t y = 0; y < row.size(); ++y) out[y] += row[y];
  }
  return out;
}

double entropy(const std::vector<double>& pmf) {
  double h = 0.0;
  for (double p : pmf) {
    if (p < 0.0) throw std::invalid_argument("probabilities must be nonnegative");
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double conditional_entropy(const DiscreteJoint& joint) {
  const auto py = joint.marginal_y();
  double h = 0.0;
  for (std::size_t x = 0; x < joint.rows(); ++x) {
    for (std::size_t y = 0; y < joint.cols(); ++y) {
      const double p = joint(x, y);
      if (p > 0.0) h -= p * std::log(p / py[y]);
    }
  }
  return h;
}

double mutual_information(const DiscreteJoint& joint) {
  const auto px = joint.marginal_x();
  const auto py = joint.marginal_y();
  double info = 0.0;
  for (std::size_t x = 0; x < joint.rows(); ++x) {
    for (std::size_t y = 0; y < joint.cols(); ++y) {
      const double p = joint(x, y);
      if (p > 0.0) info += p * std::log(p / (px[x] * py[y]));
    }
  }
  return std::max(0.0, info);
}

void BoundSpec::validate() const {
  if (m < 1 || d < 1) throw std::invalid_argument("bound needs d >= 1 and m >= 1");
  if (m > d) throw std::invalid_argument("bound needs m <= d");
  if (horizon < 1) throw std::invalid_argument("bound needs a horizon of at least 1");
}

double entropy_budget(std::size_t d, std::size_t m) {
  BoundSpec{d, m, 1}.validate();
  return static_cast<double>(m) *
         (std::log(static_cast<double>(d) / static_cast<double>(m)) + 1.0);
}

double optimal_action_entropy_bound(std::size_t d, std::size_t m) {
  BoundSpec{d, m, 1}.validate();
  return static_cast<double>(d) * bernoulli_entropy(static_cast<double>(m) / static_cast<double>(d));
}

double theorem1_bound(std::size_t d, std::size_t m, std::size_t t) {
  return std::sqrt(0.5 * static_cast<double>(d) * static_cast<double>(t) * entropy_budget(d, m));
}

double theorem1_bound(const BoundSpec& spec, std::size_t t) {
  spec.validate();
  if (t < 1 || t > spec.horizon) throw std::invalid_argument("t must lie in 1..horizon");
  return theorem1_bound(spec.d, spec.m, t);
}

double per_capita_bound(const BoundSpec& spec, std::size_t t) {
  spec.validate();
  if (t < 1) throw std::invalid_argument("t must be at least 1");
  const double ratio = static_cast<double>(spec.d) / static_cast<double>(spec.m);
  const double tt = static_cast<double>(t);
  return std::sqrt(0.5 * ratio * (std::log(ratio) + 1.0)) * (std::sqrt(tt) - std::sqrt(tt - 1.0));
}

void write_bound_curve_csv(std::ostream& out, const BoundSpec& spec) {
  spec.validate();
  out << "t,cumulative_bound,per_capita_bound\n";
  out.precision(17);
  for (std::size_t t = 1; t <= spec.horizon; ++t) {
    out << t << ',' << theorem1_bound(spec, t) << ',' << per_capita_bound(spec, t) << '\n';
  }
}

std::vector<double> cumulative_regret(const Trajectory& trajectory) {
  return trajectory.cumulative_regret();
}

RegretSummary summarize_regret(const std::vector<std::vector<double>>& curves) {
  RegretSummary out;
  if (curves.empty()) return out;
  const std::size_t len = curves[0].size();
  for (const auto& c : curves) {
    if (c.size() != len) throw std::invalid_argument("regret curves differ in length");
  }
  const double n = static_cast<double>(curves.size());
  out.mean.assign(len, 0.0);
  out.std_error.assign(len, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    double sum = 0.0;
    for (const auto& c : curves) sum += c[t];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& c : curves) ss += (c[t] - mean) * (c[t] - mean);
    out.mean[t] = mean;
    out.std_error[t] = curves.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kLemmaTol = 1e-12;

class LemmaTree {
 public:
  LemmaTree(const DiscretePriorInstance& inst, std::size_t depth, std::size_t max_nodes,
            LemmaReport& report)
      : inst_(inst), depth_(depth), max_nodes_(max_nodes), report_(report) {
    actions_ = enumerate_feasible(inst.set, kMaxLemmaActions);
    d_ = option_count(inst.set);
    for (const auto& theta : inst.support) {
      const auto best = solve(inst.set, ThetaVector(theta).span());
      const auto it = std::find(actions_.begin(), actions_.end(), best.action);
      if (it == actions_.end()) throw std::logic_error("solver returned an unlisted action");
      star_.push_back(static_cast<std::size_t>(it - actions_.begin()));
    }
    for (const auto& a : actions_) {
      selected_.push_back(a.selected());
      m_ = std::max(m_, selected_.back().size());
    }
  }

  void run() {
    std::vector<double> w = inst_.weights;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= total;
    const auto root = marginals(w);
    for (double p : root.pstar) report_.root_entropy += bernoulli_entropy(clamp01(p));
    visit(w, 1.0, 0);
    report_.entropy_reduction = report_.root_entropy - leaf_entropy_;
  }

 private:
  struct Marginals {
    std::vector<double> action_prob;  // P(A* = a)
    std::vector<double> pstar;        // P(A*_j = 1)
    std::vector<double> nu;           // E[theta_j]
    std::vector<double> nu_star;      // E[theta_j | A*_j = 1]
  };

  static double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

  Marginals marginals(const std::vector<double>& w) const {
    Marginals m;
    m.action_prob.assign(actions_.size(), 0.0);
    m.pstar.assign(d_, 0.0);
    m.nu.assign(d_, 0.0);
    m.nu_star.assign(d_, 0.0);
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (w[k] == 0.0) continue;
      m.action_prob[star_[k]] += w[k];
      const auto& theta = inst_.support[k];
      for (std::size_t j = 0; j < d_; ++j) m.nu[j] += w[k] * theta[j];
      for (std::size_t j : selected_[star_[k]]) {
        m.pstar[j] += w[k];
        m.nu_star[j] += w[k] * theta[j];
      }
    }
    for (std::size_t j = 0; j < d_; ++j) {
      m.nu[j] = clamp01(m.nu[j]);
      m.nu_star[j] = m.pstar[j] > 0.0 ? clamp01(m.nu_star[j] / m.pstar[j]) : m.nu[j];
      m.pstar[j] = clamp01(m.pstar[j]);
    }
    return m;
  }

  // Likelihood of outcome bits `y` on the options of action `a`.
  double likelihood(std::size_t k, std::size_t a, std::size_t y) const {
    double l = 1.0;
    const auto& sel = selected_[a];
    for (std::size_t i = 0; i < sel.size(); ++i) {
      const double th = inst_.support[k][sel[i]];
      l *= (y >> i & 1U) ? th : 1.0 - th;
    }
    return l;
  }

  void visit(const std::vector<double>& w, double prob, std::size_t depth) {
    const auto mg = marginals(w);
    if (depth == depth_) {
      double h = 0.0;
      for (double p : mg.pstar) h += bernoulli_entropy(p);
      leaf_entropy_ += prob * h;
      return;
    }
    if (++report_.nodes > max_nodes_) throw std::invalid_argument("lemma instance is too large");

    NodeCheck check;
    check.depth = depth;
    check.probability = prob;

    double optimal = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (w[k] == 0.0) continue;
      for (std::size_t j : selected_[star_[k]]) optimal += w[k] * inst_.support[k][j];
    }
    double chosen = 0.0;
    for (std::size_t a = 0; a < actions_.size(); ++a) {
      for (std::size_t j : selected_[a]) chosen += mg.action_prob[a] * mg.nu[j];
    }
    check.expected_regret = optimal - chosen;

    // Joint law of (A*_j, observation) with the observation (A_t, Y_t(A_t))
    // drawn from the Thompson action distribution.
    std::vector<std::pair<std::size_t, std::size_t>> obs;
    std::vector<double> obs_prob;
    std::vector<std::vector<double>> joint_one(d_);  // P(A*_j = 1, obs)
    std::vector<std::vector<double>> child_weights;
    for (std::size_t a = 0; a < actions_.size(); ++a) {
      if (mg.action_prob[a] == 0.0) continue;
      const std::size_t patterns = std::size_t{1} << selected_[a].size();
      for (std::size_t y = 0; y < patterns; ++y) {
        std::vector<double> cw(w.size(), 0.0);
        double total = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
          if (w[k] == 0.0) continue;
          cw[k] = w[k] * likelihood(k, a, y);
          total += cw[k];
        }
        if (total == 0.0) continue;
        const double p_obs = mg.action_prob[a] * total;
        obs.emplace_back(a, y);
        obs_prob.push_back(p_obs);
        for (std::size_t j = 0; j < d_; ++j) joint_one[j].push_back(0.0);
        for (std::size_t k = 0; k < w.size(); ++k) {
          if (cw[k] == 0.0) continue;
          for (std::size_t j : selected_[star_[k]]) joint_one[j].back() += mg.action_prob[a] * cw[k];
        }
        for (auto& x : cw) x /= total;
        child_weights.push_back(std::move(cw));
      }
    }

    double lemma1_sum = 0.0;
    double info_total = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      double info = 0.0;
      const double p1 = mg.pstar[j];
      for (std::size_t o = 0; o < obs.size(); ++o) {
        const double one = std::min(joint_one[j][o], obs_prob[o]);
        const double zero = obs_prob[o] - one;
        if (one > 0.0 && p1 > 0.0) info += one * std::log(one / (p1 * obs_prob[o]));
        if (zero > 0.0 && p1 < 1.0) info += zero * std::log(zero / ((1.0 - p1) * obs_prob[o]));
      }
      info = std::max(0.0, info);
      info_total += info;

      if (p1 == 0.0) continue;
      const double kl = bernoulli_kl(mg.nu_star[j], mg.nu[j]);
      const double lhs2 = p1 * p1 * kl;
      lemma1_sum += lhs2;
      check.lemma2_excess = std::max(check.lemma2_excess, lhs2 - info);
      const double gap = mg.nu_star[j] - mg.nu[j];
      check.pinsker_excess = std::max(check.pinsker_excess, gap * gap - 0.5 * kl);
    }
    check.lemma1_rhs = std::sqrt(0.5 * static_cast<double>(d_) * lemma1_sum);
    report_.information_sum += prob * info_total;

    if (check.expected_regret > check.lemma1_rhs + kLemmaTol) ++report_.lemma1_failures;
    if (check.lemma2_excess > kLemmaTol) ++report_.lemma2_failures;
    if (check.pinsker_excess > kLemmaTol) ++report_.pinsker_failures;
    report_.checks.push_back(check);

    for (std::size_t o = 0; o < obs.size(); ++o) {
      visit(child_weights[o], prob * obs_prob[o], depth + 1);
    }
  }

 public:
  std::size_t m() const { return m_; }

 private:
  const DiscretePriorInstance& inst_;
  std::size_t depth_;
  std::size_t max_nodes_;
  LemmaReport& report_;
  std::vector<ActionVector> actions_;
  std::vector<std::vector<std::size_t>> selected_;
  std::vector<std::size_t> star_;
  std::size_t d_ = 0;
  std::size_t m_ = 0;
  double leaf_entropy_ = 0.0;
};

}  // namespace

bool LemmaReport::ok() const {
  return lemma1_failures == 0 && lemma2_failures == 0 && pinsker_failures == 0 && lemma3_holds &&
         chain_rule_holds;
}

LemmaReport verify_lemma_properties(const DiscretePriorInstance& instance, std::size_t depth,
                                    std::size_t max_nodes) {
  check_feasible_set(instance.set);
  const std::size_t d = option_count(instance.set);
  if (instance.support.empty() || instance.support.size() != instance.weights.size()) {
    throw std::invalid_argument("prior needs matching support points and weights");
  }
  for (const auto& theta : instance.support) {
    if (theta.size() != d) throw std::invalid_argument("support point has the wrong dimension");
  }
  double total = 0.0;
  for (double w : instance.weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("prior weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("prior weights sum to zero");
  try {
    if (enumerate_feasible(instance.set, kMaxLemmaActions).empty()) {
      throw std::invalid_argument("feasible set is empty");
    }
  } catch (const EnumerationLimitError&) {
    throw std::invalid_argument("lemma checks need at most 20 feasible actions");
  }

  LemmaReport report;
  report.instance = instance.name;
  report.depth = depth;
  LemmaTree tree(instance, depth, max_nodes, report);
  tree.run();

  const std::size_t m = tree.m();
  report.entropy_bound = optimal_action_entropy_bound(d, m);
  report.budget = entropy_budget(d, m);
  const double tol = 1e-9;
  report.chain_rule_holds = std::abs(report.information_sum - report.entropy_reduction) <= tol;
  report.lemma3_holds = report.information_sum <= report.root_entropy + tol &&
                        report.root_entropy <= report.entropy_bound + tol &&
                        report.entropy_bound <= report.budget + tol;
  return report;
}

std::vector<DiscretePriorInstance> packaged_lemma_instances() {
  std::vector<DiscretePriorInstance> out;

  out.push_back({"two_point_d2", TopM{2, 1}, {{0.8, 0.3}, {0.4, 0.7}}, {0.5, 0.5}});

  DiscretePriorInstance sym{"symmetric_top2_of_4", TopM{4, 2}, {}, {}};
  std::vector<double> base{0.2, 0.4, 0.6, 0.9};
  do {
    sym.support.push_back(base);
    sym.weights.push_back(1.0);
  } while (std::next_permutation(base.begin(), base.end()));
  out.push_back(std::move(sym));

  out.push_back({"assignment_3x3",
                 Assignment{3},
                 {{0.7, 0.2, 0.5, 0.3, 0.6, 0.4, 0.5, 0.5, 0.1},
                  {0.2, 0.8, 0.4, 0.6, 0.3, 0.5, 0.4, 0.2, 0.9},
                  {0.5, 0.5, 0.5, 0.9, 0.1, 0.3, 0.2, 0.7, 0.6},
                  {0.3, 0.4, 0.9, 0.5, 0.7, 0.2, 0.8, 0.3, 0.4}},
                 {0.4, 0.3, 0.2, 0.1}});
  return out;
}

void write_lemma_report(std::ostream& out, const LemmaReport& r) {
  out.precision(12);
  out << "instance=" << r.instance << '\n'
      << "depth=" << r.depth << '\n'
      << "nodes=" << r.nodes << '\n'
      << "lemma1_failures=" << r.lemma1_failures << '\n'
      << "lemma2_failures=" << r.lemma2_failures << '\n'
      << "pinsker_failures=" << r.pinsker_failures << '\n'
      << "information_sum=" << r.information_sum << '\n'
      << "entropy_reduction=" << r.entropy_reduction << '\n'
      << "root_entropy=" << r.root_entropy << '\n'
      << "entropy_bound=" << r.entropy_bound << '\n'
      << "budget=" << r.budget << '\n'
      << "lemma3=" << (r.lemma3_holds ? "pass" : "fail") << '\n'
      << "chain_rule=" << (r.chain_rule_holds ? "pass" : "fail") << '\n'
      << "status=" << (r.ok() ? "pass" : "fail") << '\n';
}

}  // namespace combibandit
