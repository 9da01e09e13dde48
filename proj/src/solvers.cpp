#include "combibandit/solvers.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>

namespace combibandit {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(std::span<const double> values) {
  for (double x : values) {
    if (!std::isfinite(x)) throw std::invalid_argument("solver input is not finite");
  }
}

void require_size(std::span<const double> values, std::size_t d) {
  if (values.size() != d) {
    throw std::invalid_argument("expected " + std::to_string(d) +
                                " option values, got " +
                                std::to_string(values.size()));
  }
}

#ifndef NDEBUG
void debug_validate(const FeasibleSet& set, const ActionVector& a) {
  std::string why;
  assert(is_feasible(set, a, &why) && "solver returned an infeasible action");
}
#else
void debug_validate(const FeasibleSet&, const ActionVector&) {}
#endif

}  // namespace

std::size_t option_count(const FeasibleSet& set) {
  return std::visit(
      overloaded{
          [](const TopM& s) { return s.d; },
          [](const Assignment& s) { return s.k * s.k; },
          [](const Capacitated& s) { return s.items * s.capacities.size(); },
          [](const MultipleKnapsack& s) {
            return s.weights.size() * s.capacities.size();
          },
          [](const Explicit& s) { return s.d; },
      },
      set);
}

std::size_t batch_size(const FeasibleSet& set) {
  return std::visit(
      overloaded{
          [](const TopM& s) { return s.m; },
          [](const Assignment& s) { return s.k; },
          [](const Capacitated& s) { return s.items; },
          [](const MultipleKnapsack& s) { return s.weights.size(); },
          [](const Explicit& s) {
            return s.actions.empty() ? std::size_t{0} : s.actions.front().count();
          },
      },
      set);
}

std::string family_name(const FeasibleSet& set) {
  return std::visit(overloaded{
                        [](const TopM&) { return std::string("top_m"); },
                        [](const Assignment&) { return std::string("assignment"); },
                        [](const Capacitated&) { return std::string("capacitated"); },
                        [](const MultipleKnapsack&) { return std::string("knapsack"); },
                        [](const Explicit&) { return std::string("explicit"); },
                    },
                    set);
}

void check_feasible_set(const FeasibleSet& set) {
  std::visit(
      overloaded{
          [](const TopM& s) {
            if (s.m < 1 || s.m > s.d) throw std::invalid_argument("top-m needs 1 <= m <= d");
          },
          [](const Assignment& s) {
            if (s.k < 1) throw std::invalid_argument("assignment needs k >= 1");
          },
          [](const Capacitated& s) {
            if (s.capacities.empty()) throw std::invalid_argument("capacitated set needs nodes");
            for (int c : s.capacities) {
              if (c < 0) throw std::invalid_argument("capacities must be nonnegative");
            }
          },
          [](const MultipleKnapsack& s) {
            if (s.capacities.empty()) throw std::invalid_argument("knapsack set needs knapsacks");
            for (int w : s.weights) {
              if (w < 1) throw std::invalid_argument("item weights must be positive integers");
            }
            for (int c : s.capacities) {
              if (c < 0) throw std::invalid_argument("capacities must be nonnegative");
            }
          },
          [](const Explicit& s) {
            if (s.actions.empty()) throw std::invalid_argument("explicit set is empty");
            const std::size_t m = s.actions.front().count();
            for (const auto& a : s.actions) {
              if (a.size() != s.d || a.count() != m) {
                throw std::invalid_argument("explicit actions must share d and m");
              }
            }
          },
      },
      set);
}

ActionVector solve_top_m(std::span<const double> theta_hat, std::size_t m) {
  const std::size_t d = theta_hat.size();
  if (m > d) throw std::invalid_argument("top-m: m exceeds d");
  require_finite(theta_hat);
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m),
                    idx.end(), [&](std::size_t a, std::size_t b) {
                      if (theta_hat[a] != theta_hat[b]) return theta_hat[a] > theta_hat[b];
                      return a < b;
                    });
  ActionVector action(d);
  for (std::size_t i = 0; i < m; ++i) action.set(idx[i]);
  return action;
}

namespace {

// Kuhn's augmenting paths: can rows first_row..n-1 be matched to the columns
// not yet taken, using tight edges only?
bool tight_matching_exists(const std::vector<char>& tight, std::size_t n, std::size_t first_row,
                           const std::vector<char>& col_taken) {
  std::vector<std::size_t> row_of_col(n, SIZE_MAX);
  std::vector<char> seen(n);
  std::function<bool(std::size_t)> augment = [&](std::size_t r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (col_taken[c] || !tight[r * n + c] || seen[c]) continue;
      seen[c] = 1;
      if (row_of_col[c] == SIZE_MAX || augment(row_of_col[c])) {
        row_of_col[c] = r;
        return true;
      }
    }
    return false;
  };
  for (std::size_t r = first_row; r < n; ++r) {
    std::fill(seen.begin(), seen.end(), 0);
    if (!augment(r)) return false;
  }
  return true;
}

}  // namespace

Solution solve_assignment(std::span<const double> values, std::size_t k) {
  require_size(values, k * k);
  require_finite(values);
  const std::size_t n = k;
  // Hungarian method on costs -value, 1-based potentials.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  auto cost = [&](std::size_t i, std::size_t j) { return -values[(i - 1) * k + (j - 1)]; };
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  // Every optimal matching uses only edges left tight by the final
  // potentials, so the lexicographically smallest one is found greedily row
  // by row, keeping a perfect tight matching of the remaining rows possible.
  double scale = 1.0;
  for (double x : values) scale = std::max(scale, std::abs(x));
  const double tol = 1e-9 * scale;
  std::vector<char> tight(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) tight[i * n + j] = cost(i + 1, j + 1) - u[i + 1] - v[j + 1] <= tol;
  }
  std::vector<std::size_t> col_of(n, SIZE_MAX);
  std::vector<char> col_taken(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (col_taken[c] || !tight[r * n + c]) continue;
      col_taken[c] = 1;
      if (tight_matching_exists(tight, n, r + 1, col_taken)) {
        col_of[r] = c;
        break;
      }
      col_taken[c] = 0;
    }
  }
  Solution sol{ActionVector(k * k), 0.0, {}};
  for (std::size_t r = 0; r < n; ++r) sol.action.set(r * k + col_of[r]);
  sol.value = reward(sol.action, values);
  debug_validate(Assignment{k}, sol.action);
  return sol;
}

Solution solve_assignment(const std::vector<std::vector<double>>& matrix) {
  const std::size_t k = matrix.size();
  std::vector<double> flat;
  flat.reserve(k * k);
  for (const auto& row : matrix) {
    if (row.size() != k) throw std::invalid_argument("assignment matrix must be square");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return solve_assignment(flat, k);
}

namespace {

// Successive shortest paths with Bellman-Ford (queue-based) on a small
// network; costs may be negative, capacities are integral.
class MinCostFlow {
 public:
  explicit MinCostFlow(std::size_t nodes) : graph_(nodes) {}

  std::size_t add_edge(std::size_t from, std::size_t to, int cap, double cost) {
    graph_[from].push_back(edges_.size());
    edges_.push_back({to, cap, cost});
    graph_[to].push_back(edges_.size());
    edges_.push_back({from, 0, -cost});
    return edges_.size() - 2;
  }

  int flow_on(std::size_t edge) const { return edges_[edge ^ 1].cap; }

  // Pushes up to `want` units; returns units pushed.
  int run(std::size_t s, std::size_t t, int want) {
    int pushed = 0;
    const std::size_t n = graph_.size();
    while (pushed < want) {
      std::vector<double> dist(n, kInf);
      std::vector<std::size_t> prev_edge(n, SIZE_MAX);
      std::vector<char> in_queue(n, 0);
      std::deque<std::size_t> queue{s};
      dist[s] = 0.0;
      in_queue[s] = 1;
      while (!queue.empty()) {
        const std::size_t x = queue.front();
        queue.pop_front();
        in_queue[x] = 0;
        for (std::size_t e : graph_[x]) {
          const auto& edge = edges_[e];
          if (edge.cap <= 0) continue;
          const double nd = dist[x] + edge.cost;
          if (nd < dist[edge.to] - 1e-12) {
            dist[edge.to] = nd;
            prev_edge[edge.to] = e;
            if (!in_queue[edge.to]) {
              in_queue[edge.to] = 1;
              queue.push_back(edge.to);
            }
          }
        }
      }
      if (dist[t] == kInf) break;
      int add = want - pushed;
      for (std::size_t x = t; x != s; x = edges_[prev_edge[x] ^ 1].to) {
        add = std::min(add, edges_[prev_edge[x]].cap);
      }
      for (std::size_t x = t; x != s; x = edges_[prev_edge[x] ^ 1].to) {
        edges_[prev_edge[x]].cap -= add;
        edges_[prev_edge[x] ^ 1].cap += add;
      }
      pushed += add;
    }
    return pushed;
  }

 private:
  struct Edge {
    std::size_t to;
    int cap;
    double cost;
  };
  std::vector<std::vector<std::size_t>> graph_;
  std::vector<Edge> edges_;
};

}  // namespace

namespace {

// Best placement of items first..n-1 under `caps`, or -inf when they do not
// fit. Writes each item's node into `node_of` when given.
double capacitated_optimum(std::span<const double> theta_hat, std::size_t n, std::size_t first,
                           const std::vector<int>& caps, std::vector<std::size_t>* node_of = nullptr) {
  const std::size_t r = caps.size();
  const std::size_t m = n - first;
  if (m == 0) return 0.0;
  const std::size_t source = 0, sink = m + r + 1;
  MinCostFlow flow(m + r + 2);
  for (std::size_t i = 0; i < m; ++i) flow.add_edge(source, 1 + i, 1, 0.0);
  std::vector<std::size_t> edges(m * r);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < r; ++k) {
      edges[i * r + k] = flow.add_edge(1 + i, 1 + m + k, 1, -theta_hat[(first + i) * r + k]);
    }
  }
  for (std::size_t k = 0; k < r; ++k) flow.add_edge(1 + m + k, sink, caps[k], 0.0);
  if (flow.run(source, sink, static_cast<int>(m)) != static_cast<int>(m)) return -kInf;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < r; ++k) {
      if (flow.flow_on(edges[i * r + k]) == 0) continue;
      total += theta_hat[(first + i) * r + k];
      if (node_of) (*node_of)[first + i] = k;
    }
  }
  return total;
}

}  // namespace

Solution solve_capacitated(std::span<const double> theta_hat,
                           const Capacitated& set) {
  check_feasible_set(set);
  const std::size_t n = set.items;
  const std::size_t r = set.capacities.size();
  require_size(theta_hat, n * r);
  require_finite(theta_hat);
  long long total = 0;
  for (int c : set.capacities) total += c;
  if (total < static_cast<long long>(n)) {
    throw InfeasibleError("capacities host " + std::to_string(total) +
                          " items but " + std::to_string(n) + " need placement");
  }
  const double best = capacitated_optimum(theta_hat, n, 0, set.capacities);
  if (best == -kInf) throw InfeasibleError("capacitated matching cannot place every item");

  // Lexicographically smallest optimum: give each item, in order, the lowest
  // node that still lets the remaining items reach the optimum.
  double scale = 1.0;
  for (double x : theta_hat) scale = std::max(scale, std::abs(x));
  const double tol = 1e-9 * scale * static_cast<double>(n + 1);
  std::vector<int> caps = set.capacities;
  std::vector<std::size_t> node_of(n, 0);
  double fixed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    bool placed = false;
    for (std::size_t k = 0; k < r && !placed; ++k) {
      if (caps[k] == 0) continue;
      --caps[k];
      const double rest = capacitated_optimum(theta_hat, n, i + 1, caps);
      if (fixed + theta_hat[i * r + k] + rest >= best - tol) {
        node_of[i] = k;
        fixed += theta_hat[i * r + k];
        placed = true;
      } else {
        ++caps[k];
      }
    }
    if (!placed) {
      // Only reachable through rounding; fall back to the plain optimum.
      capacitated_optimum(theta_hat, n, i, caps, &node_of);
      break;
    }
  }
  Solution sol{ActionVector(n * r), 0.0, {}};
  for (std::size_t i = 0; i < n; ++i) sol.action.set(i * r + node_of[i]);
  sol.value = reward(sol.action, theta_hat);
  debug_validate(set, sol.action);
  return sol;
}

namespace {

class KnapsackSearch {
 public:
  KnapsackSearch(std::span<const double> values, const MultipleKnapsack& set)
      : values_(values),
        weights_(set.weights),
        residual_(set.capacities),
        n_(set.weights.size()),
        k_(set.capacities.size()) {
    limit_ = set.node_limit;
    const int max_cap = *std::max_element(residual_.begin(), residual_.end());
    best_item_value_.assign(n_, 0.0);
    knap_order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      auto& order = knap_order_[i];
      for (std::size_t k = 0; k < k_; ++k) {
        if (set.capacities[k] >= weights_[i]) order.push_back(k);
      }
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return value(i, a) > value(i, b);
      });
      if (!order.empty() && weights_[i] <= max_cap) {
        best_item_value_[i] = std::max(0.0, value(i, order.front()));
      }
    }
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    auto density = [&](std::size_t i) { return best_item_value_[i] / weights_[i]; };
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      if (density(a) != density(b)) return density(a) > density(b);
      if (weights_[a] != weights_[b]) return weights_[a] < weights_[b];
      for (std::size_t k = 0; k < k_; ++k) {
        if (value(a, k) != value(b, k)) return value(a, k) > value(b, k);
      }
      return false;
    });
    by_density_.resize(n_);
    std::iota(by_density_.begin(), by_density_.end(), 0);
    std::stable_sort(by_density_.begin(), by_density_.end(), [&](std::size_t a, std::size_t b) {
      return density(order_[a]) > density(order_[b]);
    });

    // Items with equal value rows: a lighter one left out means every
    // heavier-or-equal one is left out too (swapping them never hurts).
    std::vector<std::vector<double>> rows;
    row_of_.assign(n_, 0);
    for (std::size_t p = 0; p < n_; ++p) {
      const std::size_t i = order_[p];
      std::vector<double> row(values_.begin() + i * k_, values_.begin() + (i + 1) * k_);
      auto it = std::find(rows.begin(), rows.end(), row);
      row_of_[p] = static_cast<std::size_t>(it - rows.begin());
      if (it == rows.end()) rows.push_back(std::move(row));
    }
    lightest_out_.assign(rows.size(), std::numeric_limits<int>::max());
    heaviest_in_.assign(rows.size(), 0);

    same_as_prev_.assign(n_, 0);
    for (std::size_t p = 1; p < n_; ++p) {
      same_as_prev_[p] =
          row_of_[p] == row_of_[p - 1] && weights_[order_[p]] == weights_[order_[p - 1]];
    }

    by_knap_.resize(k_);
    for (std::size_t k = 0; k < k_; ++k) {
      auto& list = by_knap_[k];
      for (std::size_t p = 0; p < n_; ++p) {
        if (value(order_[p], k) > 0.0) list.push_back(p);
      }
      std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
        return value(order_[a], k) / weights_[order_[a]] > value(order_[b], k) / weights_[order_[b]];
      });
    }
    choice_.assign(n_, k_);
    best_choice_.assign(n_, k_);
  }

  void run() {
    std::size_t cells = 0;
    for (int c : residual_) cells += static_cast<std::size_t>(c) * n_;
    use_lagrange_ = n_ > 8 && cells <= 400000;
    lambda_.assign(n_, 0.0);
    greedy_incumbent();
    if (use_lagrange_) tune_multipliers();
    root_bound_ = fractional_bound(0);
    if (use_lagrange_) {
      const double lag = relaxation(0, nullptr);
      root_bound_ = std::min(root_bound_, lag + slack(lag));
    }
    dfs(0, 0.0);
  }

  bool stopped() const { return stopped_; }
  double root_bound() const { return root_bound_; }

  const std::vector<std::size_t>& best_choice() const { return best_choice_; }
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  double value(std::size_t item, std::size_t knap) const {
    return values_[item * k_ + knap];
  }

  bool forced_out(std::size_t pos) const {
    return lightest_out_[row_of_[pos]] <= weights_[order_[pos]];
  }

  // Best subset of cand_ (position, reduced value) within `cap`; fills
  // `chosen` when given.
  double knapsack_dp(int cap, std::vector<std::size_t>* chosen) {
    const std::size_t width = static_cast<std::size_t>(cap) + 1;
    dp_.assign(width, 0.0);
    if (chosen) take_.assign(cand_.size() * width, 0);
    for (std::size_t q = 0; q < cand_.size(); ++q) {
      const int w = weights_[order_[cand_[q].first]];
      const double v = cand_[q].second;
      for (int c = cap; c >= w; --c) {
        const double with = dp_[c - w] + v;
        if (with > dp_[c]) {
          dp_[c] = with;
          if (chosen) take_[q * width + c] = 1;
        }
      }
    }
    if (chosen) {
      chosen->clear();
      int c = cap;
      for (std::size_t q = cand_.size(); q-- > 0;) {
        if (take_[q * width + c]) {
          chosen->push_back(cand_[q].first);
          c -= weights_[order_[cand_[q].first]];
        }
      }
    }
    return dp_[cap];
  }

  void gather(std::size_t k, std::size_t pos) {
    cand_.clear();
    for (std::size_t p = pos; p < n_; ++p) {
      if (forced_out(p) || weights_[order_[p]] > residual_[k]) continue;
      const double v = value(order_[p], k) - lambda_[p];
      if (v > 0.0) cand_.emplace_back(p, v);
    }
  }

  // Relaxes "each item at most once" over the undecided items with
  // multipliers lambda_; every knapsack is then an independent 0/1 knapsack.
  // Counts how often each item was picked when `count` is given.
  double relaxation(std::size_t pos, std::vector<int>* count,
                    std::vector<std::vector<std::size_t>>* picks = nullptr) {
    double total = 0.0;
    for (std::size_t p = pos; p < n_; ++p) {
      if (!forced_out(p)) total += lambda_[p];
    }
    if (count) std::fill(count->begin(), count->end(), 0);
    std::vector<std::size_t> chosen;
    for (std::size_t k = 0; k < k_; ++k) {
      if (picks) (*picks)[k].clear();
      if (residual_[k] <= 0) continue;
      gather(k, pos);
      if (cand_.empty()) continue;
      total += knapsack_dp(residual_[k], count ? &chosen : nullptr);
      if (count) {
        for (auto p : chosen) ++(*count)[p];
        if (picks) (*picks)[k] = chosen;
      }
    }
    return total;
  }

  static double slack(double x) { return 1e-9 * (1.0 + std::abs(x)); }

  // A few subgradient steps on the multipliers of the undecided items.
  // Returns true once the subtree can be pruned. lambda_ keeps the last
  // iterate; callers restore it.
  bool lagrange_prunes(std::size_t pos, double current, int iterations) {
    const double target = best_value_ - current;
    std::vector<int> count(n_, 0);
    double scale = 1.0;
    for (int it = 0;; ++it) {
      const double bound = relaxation(pos, &count);
      if (bound + slack(bound) <= target) return true;
      if (it == iterations) return false;
      double norm = 0.0;
      for (std::size_t p = pos; p < n_; ++p) {
        if (forced_out(p)) continue;
        const double g = 1.0 - count[p];
        norm += g * g;
      }
      if (norm == 0.0) return false;
      const double step = scale * (bound - target) / norm;
      for (std::size_t p = pos; p < n_; ++p) {
        if (!forced_out(p)) lambda_[p] = std::max(0.0, lambda_[p] - step * (1.0 - count[p]));
      }
      scale *= 0.7;
    }
  }

  // Keeps the solution (choices by position) if it beats the incumbent.
  void offer(const std::vector<std::size_t>& choice) {
    double v = 0.0;
    for (std::size_t p = 0; p < n_; ++p) {
      if (choice[p] < k_) v += value(order_[p], choice[p]);
    }
    if (v > best_value_) {
      best_value_ = v;
      best_choice_ = choice;
    }
  }

  // Fills items in order into the best knapsack with room, starting from a
  // partial assignment.
  void complete_greedily(std::vector<std::size_t>& choice, std::vector<int>& res) const {
    for (std::size_t p : by_density_) {
      if (choice[p] < k_) continue;
      const std::size_t i = order_[p];
      for (std::size_t k : knap_order_[i]) {
        if (res[k] >= weights_[i] && value(i, k) > 0.0) {
          res[k] -= weights_[i];
          choice[p] = k;
          break;
        }
      }
    }
  }

  void greedy_incumbent() {
    std::vector<std::size_t> choice(n_, k_);
    std::vector<int> res = residual_;
    complete_greedily(choice, res);
    offer(choice);
  }

  // Subgradient steps on the root multipliers; each relaxed solution is also
  // repaired into a feasible one to tighten the incumbent.
  void tune_multipliers() {
    std::vector<double> best_lambda = lambda_;
    double best_bound = kInf;
    double step_scale = 2.0;
    int stale = 0;
    std::vector<int> count(n_, 0);
    std::vector<std::vector<std::size_t>> picks(k_);
    for (int it = 0; it < 200; ++it) {
      const double bound = relaxation(0, &count, &picks);
      if (bound < best_bound - 1e-12) {
        best_bound = bound;
        best_lambda = lambda_;
        stale = 0;
      } else if (++stale >= 10) {
        step_scale /= 2.0;
        stale = 0;
      }

      std::vector<std::size_t> repaired(n_, k_);
      std::vector<int> res = residual_;
      for (std::size_t k = 0; k < k_; ++k) {
        for (auto p : picks[k]) {
          if (repaired[p] == k_) {
            repaired[p] = k;
            res[k] -= weights_[order_[p]];
          }
        }
      }
      complete_greedily(repaired, res);
      offer(repaired);

      if (best_bound - best_value_ <= slack(best_value_) || step_scale < 1e-4) break;
      double norm = 0.0;
      for (std::size_t p = 0; p < n_; ++p) {
        const double g = 1.0 - count[p];
        norm += g * g;
      }
      if (norm == 0.0) break;
      const double step = step_scale * (bound - best_value_) / norm;
      for (std::size_t p = 0; p < n_; ++p) {
        lambda_[p] = std::max(0.0, lambda_[p] - step * (1.0 - count[p]));
      }
    }
    lambda_ = best_lambda;
  }

  // Minimum of two relaxations over the undecided items: all residual
  // capacity merged into one knapsack, and each knapsack filled on its own
  // as if every item could go into all of them.
  double fractional_bound(std::size_t pos) const {
    long long cap = 0;
    int max_res = 0;
    for (int c : residual_) {
      cap += c;
      max_res = std::max(max_res, c);
    }
    double merged = 0.0;
    for (std::size_t q = 0; q < n_ && cap > 0; ++q) {
      const std::size_t p = by_density_[q];
      const std::size_t i = order_[p];
      const double v = best_item_value_[i];
      if (p < pos || v <= 0.0 || weights_[i] > max_res || forced_out(p)) continue;
      if (weights_[i] <= cap) {
        merged += v;
        cap -= weights_[i];
      } else {
        merged += v * static_cast<double>(cap) / weights_[i];
        cap = 0;
      }
    }
    double split = 0.0;
    for (std::size_t k = 0; k < k_ && split < merged; ++k) {
      long long c = residual_[k];
      for (std::size_t p : by_knap_[k]) {
        if (c <= 0) break;
        if (p < pos || forced_out(p)) continue;
        const std::size_t i = order_[p];
        if (weights_[i] > residual_[k]) continue;
        if (weights_[i] <= c) {
          split += value(i, k);
          c -= weights_[i];
        } else {
          split += value(i, k) * static_cast<double>(c) / weights_[i];
          c = 0;
        }
      }
    }
    return std::min(merged, split);
  }

  void dfs(std::size_t pos, double current) {
    if (limit_ != 0 && nodes_ >= limit_) {
      stopped_ = true;
      return;
    }
    ++nodes_;
    if (pos == n_) {
      if (current > best_value_) {
        best_value_ = current;
        best_choice_ = choice_;
      }
      return;
    }
    if (current + fractional_bound(pos) <= best_value_) return;
    std::vector<double> saved_lambda;
    if (use_lagrange_ && pos + 1 < n_) {
      saved_lambda = lambda_;
      if (lagrange_prunes(pos, current, 3)) {
        lambda_ = std::move(saved_lambda);
        return;
      }
    }
    const std::size_t item = order_[pos];
    const int w = weights_[item];
    if (!forced_out(pos)) {
      // Identical items take non-decreasing choices.
      const std::size_t min_choice = same_as_prev_[pos] ? choice_[pos - 1] : 0;
      int& heaviest = heaviest_in_[row_of_[pos]];
      const int saved = heaviest;
      heaviest = std::max(heaviest, w);
      for (std::size_t k : knap_order_[item]) {
        if (k < min_choice || residual_[k] < w) continue;
        residual_[k] -= w;
        choice_[pos] = k;
        dfs(pos + 1, current + value(item, k));
        residual_[k] += w;
      }
      heaviest = saved;
    }
    // A heavier item of the same row already placed: this one must be too.
    if (heaviest_in_[row_of_[pos]] <= w) {
      choice_[pos] = k_;
      int& lightest = lightest_out_[row_of_[pos]];
      const int saved = lightest;
      lightest = std::min(lightest, w);
      dfs(pos + 1, current);
      lightest = saved;
    }
    if (!saved_lambda.empty()) lambda_ = std::move(saved_lambda);
  }

  std::span<const double> values_;
  const std::vector<int>& weights_;
  std::vector<int> residual_;
  std::size_t n_;
  std::size_t k_;
  std::vector<double> best_item_value_;
  std::vector<std::vector<std::size_t>> knap_order_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> row_of_;
  std::vector<int> lightest_out_;
  std::vector<int> heaviest_in_;
  std::vector<std::size_t> by_density_;
  std::vector<char> same_as_prev_;
  std::vector<std::vector<std::size_t>> by_knap_;
  bool use_lagrange_ = false;
  std::vector<double> lambda_;
  std::vector<std::pair<std::size_t, double>> cand_;
  std::vector<double> dp_;
  std::vector<char> take_;
  std::vector<std::size_t> choice_;
  std::vector<std::size_t> best_choice_;
  double best_value_ = -kInf;
  double root_bound_ = kInf;
  std::size_t nodes_ = 0;
  std::size_t limit_ = 0;
  bool stopped_ = false;
};

}  // namespace

Solution solve_multiple_knapsack(std::span<const double> theta_hat,
                                 const MultipleKnapsack& set) {
  check_feasible_set(set);
  const std::size_t n = set.weights.size();
  const std::size_t k = set.capacities.size();
  require_size(theta_hat, n * k);
  require_finite(theta_hat);
  Solution sol{ActionVector(n * k), 0.0, {}};
  if (n == 0) return sol;
  KnapsackSearch search(theta_hat, set);
  search.run();
  sol.proven_optimal = !search.stopped();
  const auto& choice = search.best_choice();
  const auto& order = search.order();
  std::vector<char> placed(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    if (choice[p] < k) {
      sol.action.set(order[p] * k + choice[p]);
      placed[order[p]] = 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!placed[i]) sol.unassigned.push_back(i);
  }
  sol.value = reward(sol.action, theta_hat);
  sol.bound = sol.proven_optimal ? sol.value : std::max(sol.value, search.root_bound());
  debug_validate(set, sol.action);
  return sol;
}

Solution solve(const FeasibleSet& set, std::span<const double> theta_hat) {
  require_size(theta_hat, option_count(set));
  return std::visit(
      overloaded{
          [&](const TopM& s) {
            check_feasible_set(s);
            Solution sol{solve_top_m(theta_hat, s.m), 0.0, {}};
            sol.value = reward(sol.action, theta_hat);
            return sol;
          },
          [&](const Assignment& s) { return solve_assignment(theta_hat, s.k); },
          [&](const Capacitated& s) { return solve_capacitated(theta_hat, s); },
          [&](const MultipleKnapsack& s) { return solve_multiple_knapsack(theta_hat, s); },
          [&](const Explicit& s) {
            check_feasible_set(s);
            require_finite(theta_hat);
            const ActionVector* best = nullptr;
            std::vector<std::size_t> best_sel;
            double best_value = -kInf;
            for (const auto& a : s.actions) {
              const double v = reward(a, theta_hat);
              if (v > best_value ||
                  (v == best_value && a.selected() < best_sel)) {
                best = &a;
                best_value = v;
                best_sel = a.selected();
              }
            }
            return Solution{*best, best_value, {}};
          },
      },
      set);
}

namespace {

void check_limit(std::size_t count, std::size_t limit) {
  if (count > limit) {
    throw EnumerationLimitError("feasible set has more than " +
                                std::to_string(limit) + " actions");
  }
}

// C(n, k) saturating at limit + 1.
std::size_t capped_binomial(std::size_t n, std::size_t k, std::size_t limit) {
  k = std::min(k, n - k);
  long double c = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (c > static_cast<long double>(limit)) return limit + 1;
  }
  return static_cast<std::size_t>(std::llround(c));
}

}  // namespace

std::vector<ActionVector> enumerate_feasible(const FeasibleSet& set,
                                             std::size_t limit) {
  check_feasible_set(set);
  std::vector<ActionVector> out;
  std::visit(
      overloaded{
          [&](const TopM& s) {
            check_limit(capped_binomial(s.d, s.m, limit), limit);
            std::vector<std::uint8_t> bits(s.d, 0);
            std::fill(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(s.m), 1);
            // prev_permutation from the all-leading-ones pattern walks every
            // combination once.
            do {
              out.push_back(ActionVector::from_bits(bits));
            } while (std::prev_permutation(bits.begin(), bits.end()));
          },
          [&](const Assignment& s) {
            std::size_t count = 1;
            for (std::size_t i = 2; i <= s.k; ++i) {
              count *= i;
              check_limit(count, limit);
            }
            std::vector<std::size_t> perm(s.k);
            std::iota(perm.begin(), perm.end(), 0);
            do {
              ActionVector a(s.k * s.k);
              for (std::size_t r = 0; r < s.k; ++r) a.set(r * s.k + perm[r]);
              out.push_back(std::move(a));
            } while (std::next_permutation(perm.begin(), perm.end()));
          },
          [&](const Capacitated& s) {
            const std::size_t r = s.capacities.size();
            std::vector<int> residual = s.capacities;
            ActionVector a(s.items * r);
            std::function<void(std::size_t)> rec = [&](std::size_t i) {
              if (i == s.items) {
                out.push_back(a);
                check_limit(out.size(), limit);
                return;
              }
              for (std::size_t k = 0; k < r; ++k) {
                if (residual[k] <= 0) continue;
                --residual[k];
                a.set(i * r + k);
                rec(i + 1);
                a.set(i * r + k, false);
                ++residual[k];
              }
            };
            rec(0);
          },
          [&](const MultipleKnapsack& s) {
            const std::size_t n = s.weights.size();
            const std::size_t r = s.capacities.size();
            std::vector<int> residual = s.capacities;
            ActionVector a(n * r);
            std::function<void(std::size_t)> rec = [&](std::size_t i) {
              if (i == n) {
                out.push_back(a);
                check_limit(out.size(), limit);
                return;
              }
              for (std::size_t k = 0; k < r; ++k) {
                if (residual[k] < s.weights[i]) continue;
                residual[k] -= s.weights[i];
                a.set(i * r + k);
                rec(i + 1);
                a.set(i * r + k, false);
                residual[k] += s.weights[i];
              }
              rec(i + 1);
            };
            rec(0);
          },
          [&](const Explicit& s) {
            check_limit(s.actions.size(), limit);
            out = s.actions;
          },
      },
      set);
  return out;
}

bool is_feasible(const FeasibleSet& set, const ActionVector& action,
                 std::string* why) {
  auto fail = [&](std::string msg) {
    if (why) *why = std::move(msg);
    return false;
  };
  if (action.size() != option_count(set)) return fail("dimension mismatch");
  return std::visit(
      overloaded{
          [&](const TopM& s) {
            return action.count() == s.m ? true : fail("wrong batch size");
          },
          [&](const Assignment& s) {
            for (std::size_t r = 0; r < s.k; ++r) {
              std::size_t row = 0, col = 0;
              for (std::size_t c = 0; c < s.k; ++c) {
                row += action[r * s.k + c];
                col += action[c * s.k + r];
              }
              if (row != 1) return fail("row " + std::to_string(r + 1) + " not matched once");
              if (col != 1) return fail("column " + std::to_string(r + 1) + " not matched once");
            }
            return true;
          },
          [&](const Capacitated& s) {
            const std::size_t r = s.capacities.size();
            std::vector<int> load(r, 0);
            for (std::size_t i = 0; i < s.items; ++i) {
              std::size_t n = 0;
              for (std::size_t k = 0; k < r; ++k) {
                if (action[i * r + k]) {
                  ++n;
                  ++load[k];
                }
              }
              if (n != 1) return fail("item " + std::to_string(i + 1) + " not placed once");
            }
            for (std::size_t k = 0; k < r; ++k) {
              if (load[k] > s.capacities[k]) return fail("node " + std::to_string(k + 1) + " over capacity");
            }
            return true;
          },
          [&](const MultipleKnapsack& s) {
            const std::size_t r = s.capacities.size();
            std::vector<long long> load(r, 0);
            for (std::size_t i = 0; i < s.weights.size(); ++i) {
              std::size_t n = 0;
              for (std::size_t k = 0; k < r; ++k) {
                if (action[i * r + k]) {
                  ++n;
                  load[k] += s.weights[i];
                }
              }
              if (n > 1) return fail("item " + std::to_string(i + 1) + " placed twice");
            }
            for (std::size_t k = 0; k < r; ++k) {
              if (load[k] > s.capacities[k]) return fail("knapsack " + std::to_string(k + 1) + " over capacity");
            }
            return true;
          },
          [&](const Explicit& s) {
            for (const auto& a : s.actions) {
              if (a == action) return true;
            }
            return fail("action not in the explicit list");
          },
      },
      set);
}

}  // namespace combibandit
