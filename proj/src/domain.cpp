#include "combibandit/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "combibandit/rng.hpp"

namespace combibandit {

std::size_t thread_count() {
  if (const char* env = std::getenv("COMBI_BANDIT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n > 0) return static_cast<std::size_t>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

ActionVector ActionVector::from_bits(std::vector<std::uint8_t> bits) {
  for (auto b : bits) {
    if (b > 1) throw std::invalid_argument("action entries must be 0 or 1");
  }
  ActionVector a;
  a.bits_ = std::move(bits);
  return a;
}

ActionVector ActionVector::from_indices(std::size_t d,
                                        std::span<const std::size_t> selected) {
  ActionVector a(d);
  for (auto j : selected) {
    if (j >= d) throw std::out_of_range("option index out of range");
    a.bits_[j] = 1;
  }
  return a;
}

std::size_t ActionVector::count() const {
  std::size_t n = 0;
  for (auto b : bits_) n += b;
  return n;
}

void ActionVector::set(std::size_t j, bool on) {
  if (j >= bits_.size()) throw std::out_of_range("option index out of range");
  bits_[j] = on ? 1 : 0;
}

std::vector<std::size_t> ActionVector::selected() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < bits_.size(); ++j) {
    if (bits_[j]) out.push_back(j);
  }
  return out;
}

ThetaVector::ThetaVector(std::vector<double> theta) : theta_(std::move(theta)) {
  for (double t : theta_) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw std::invalid_argument("theta entries must lie in [0,1]");
    }
  }
}

ThetaVector ThetaVector::clipped(std::span<const double> raw) {
  std::vector<double> out(raw.begin(), raw.end());
  for (double& t : out) {
    if (std::isnan(t)) throw std::invalid_argument("theta entry is NaN");
    t = std::clamp(t, 0.0, 1.0);
  }
  return ThetaVector(std::move(out));
}

OutcomeVector::OutcomeVector(std::vector<std::optional<double>> values)
    : values_(std::move(values)) {
  for (const auto& v : values_) {
    if (v && !(*v >= 0.0 && *v <= 1.0)) {
      throw std::invalid_argument("observed outcomes must lie in [0,1]");
    }
  }
}

OutcomeVector OutcomeVector::observe(const ActionVector& action,
                                     std::span<const double> potential) {
  if (action.size() != potential.size()) {
    throw std::invalid_argument("action and outcome dimensions differ");
  }
  std::vector<std::optional<double>> v(action.size());
  for (std::size_t j = 0; j < action.size(); ++j) {
    if (action[j]) v[j] = potential[j];
  }
  return OutcomeVector(std::move(v));
}

ActionVector OutcomeVector::mask() const {
  ActionVector a(values_.size());
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (values_[j]) a.set(j);
  }
  return a;
}

TypeStructure::TypeStructure(std::vector<std::size_t> u_of,
                             std::vector<std::size_t> v_of, std::size_t k_u,
                             std::size_t k_v)
    : u_of_(std::move(u_of)), v_of_(std::move(v_of)), k_u_(k_u), k_v_(k_v) {
  if (u_of_.size() != v_of_.size()) {
    throw std::invalid_argument("type maps must cover the same options");
  }
  for (std::size_t j = 0; j < u_of_.size(); ++j) {
    if (u_of_[j] >= k_u_ || v_of_[j] >= k_v_) {
      throw std::invalid_argument("type id out of range");
    }
  }
}

TypeStructure TypeStructure::identity(std::size_t d) {
  std::vector<std::size_t> u(d), v(d, 0);
  for (std::size_t j = 0; j < d; ++j) u[j] = j;
  return TypeStructure(std::move(u), std::move(v), d, 1);
}

TypeStructure TypeStructure::grid(std::size_t k_u, std::size_t k_v) {
  std::vector<std::size_t> u, v;
  for (std::size_t a = 0; a < k_u; ++a) {
    for (std::size_t b = 0; b < k_v; ++b) {
      u.push_back(a);
      v.push_back(b);
    }
  }
  return TypeStructure(std::move(u), std::move(v), k_u, k_v);
}

std::vector<double> TypeStructure::broadcast(
    std::span<const double> cell_values) const {
  if (cell_values.size() != cells()) {
    throw std::invalid_argument("expected one value per cell");
  }
  std::vector<double> out(options());
  for (std::size_t j = 0; j < options(); ++j) out[j] = cell_values[cell_of(j)];
  return out;
}

void History::append(ActionVector action, OutcomeVector outcomes) {
  records_.push_back(
      HistoryRecord{records_.size() + 1, std::move(action), std::move(outcomes)});
}

void History::append_record(HistoryRecord record) {
  records_.push_back(std::move(record));
}

std::size_t History::options() const {
  return records_.empty() ? 0 : records_.front().action.size();
}

std::vector<Observation> History::observations(
    const TypeStructure& types) const {
  std::vector<Observation> out;
  for (const auto& r : records_) {
    if (r.outcomes.size() != types.options()) {
      throw std::invalid_argument("history and type structure sizes differ");
    }
    for (std::size_t j = 0; j < r.outcomes.size(); ++j) {
      if (r.outcomes[j]) out.push_back({types.cell_of(j), *r.outcomes[j]});
    }
  }
  return out;
}

double reward(const ActionVector& action, std::span<const double> theta) {
  if (action.size() != theta.size()) {
    throw std::invalid_argument("action and theta dimensions differ");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    if (action[j]) total += theta[j];
  }
  return total;
}

HistoryCheck validate_history(const History& history, std::size_t d,
                              std::size_t m) {
  HistoryCheck check;
  auto fail = [&](std::size_t i, const std::string& what) {
    check.ok = false;
    check.violations.push_back("record " + std::to_string(i + 1) + ": " + what);
  };
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    if (r.period != i + 1) fail(i, "period " + std::to_string(r.period) +
                                       " breaks the 1,2,3,... sequence");
    if (r.action.size() != d) {
      fail(i, "action has " + std::to_string(r.action.size()) +
                  " entries, expected " + std::to_string(d));
      continue;
    }
    if (r.action.count() != m) {
      fail(i, "action selects " + std::to_string(r.action.count()) +
                  " options, expected " + std::to_string(m));
    }
    if (r.outcomes.size() != d) {
      fail(i, "outcome vector has wrong length");
      continue;
    }
    if (r.outcomes.mask() != r.action) {
      fail(i, "observed mask differs from the chosen action");
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (r.outcomes[j] && !(*r.outcomes[j] >= 0.0 && *r.outcomes[j] <= 1.0)) {
        fail(i, "outcome outside [0,1] at option " + std::to_string(j + 1));
      }
    }
  }
  return check;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_history_csv(std::ostream& out, const History& history) {
  out << "period,option_index,chosen,outcome\n";
  for (const auto& r : history.records()) {
    for (std::size_t j = 0; j < r.action.size(); ++j) {
      out << r.period << ',' << (j + 1) << ',' << (r.action[j] ? 1 : 0) << ',';
      if (r.outcomes[j]) out << format_double(*r.outcomes[j]);
      out << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

template <class T>
T parse_number(const std::string& s, const char* what, std::size_t line_no) {
  T value{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " +
                                what + " '" + s + "'");
  }
  return value;
}

}  // namespace

History read_history_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  if (line.rfind("period,option_index,chosen,outcome", 0) != 0) {
    throw std::invalid_argument("history CSV header mismatch");
  }
  struct Row {
    std::size_t option;
    bool chosen;
    std::optional<double> outcome;
  };
  std::map<std::size_t, std::vector<Row>> by_period;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": expected 4 fields");
    }
    Row row;
    const auto period = parse_number<std::size_t>(f[0], "period", line_no);
    row.option = parse_number<std::size_t>(f[1], "option_index", line_no);
    const int chosen = parse_number<int>(f[2], "chosen", line_no);
    if (row.option == 0 || (chosen != 0 && chosen != 1)) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": bad option_index or chosen flag");
    }
    row.chosen = chosen == 1;
    if (!f[3].empty()) row.outcome = parse_number<double>(f[3], "outcome", line_no);
    if (row.chosen != row.outcome.has_value()) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": outcome must be present iff chosen = 1");
    }
    by_period[period].push_back(row);
  }
  History h;
  for (auto& [period, rows] : by_period) {
    std::size_t d = 0;
    for (const auto& r : rows) d = std::max(d, r.option);
    ActionVector a(d);
    std::vector<std::optional<double>> y(d);
    for (const auto& r : rows) {
      if (r.chosen) a.set(r.option - 1);
      y[r.option - 1] = r.outcome;
    }
    h.append_record(HistoryRecord{period, std::move(a), OutcomeVector(std::move(y))});
  }
  return h;
}

}  // namespace combibandit
