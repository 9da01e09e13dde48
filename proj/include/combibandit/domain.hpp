#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace combibandit {

// Option indices are zero-based throughout the C++ API. Every file format
// writes them one-based.

// Binary allocation over d options.
class ActionVector {
 public:
  ActionVector() = default;
  explicit ActionVector(std::size_t d) : bits_(d, 0) {}

  // Throws std::invalid_argument if any entry is not 0 or 1.
  static ActionVector from_bits(std::vector<std::uint8_t> bits);
  // Throws std::out_of_range for an index >= d.
  static ActionVector from_indices(std::size_t d,
                                   std::span<const std::size_t> selected);

  std::size_t size() const { return bits_.size(); }
  std::size_t count() const;
  bool operator[](std::size_t j) const { return bits_[j] != 0; }
  void set(std::size_t j, bool on = true);
  std::vector<std::size_t> selected() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  auto operator<=>(const ActionVector&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Parameter vector of mean potential outcomes, every entry in [0,1].
class ThetaVector {
 public:
  ThetaVector() = default;
  // Throws std::invalid_argument for entries outside [0,1] or NaN.
  explicit ThetaVector(std::vector<double> theta);
  // Clips each entry to [0,1]; NaN is rejected.
  static ThetaVector clipped(std::span<const double> raw);

  std::size_t size() const { return theta_.size(); }
  double operator[](std::size_t j) const { return theta_[j]; }
  const std::vector<double>& values() const { return theta_; }
  std::span<const double> span() const { return theta_; }

  bool operator==(const ThetaVector&) const = default;

 private:
  std::vector<double> theta_;
};

// Semi-bandit feedback: one slot per option, filled only where the action
// selected the option. Unobserved entries stay empty, never zero.
class OutcomeVector {
 public:
  OutcomeVector() = default;
  explicit OutcomeVector(std::vector<std::optional<double>> values);

  // Masks a full potential-outcome vector with the chosen action.
  static OutcomeVector observe(const ActionVector& action,
                               std::span<const double> potential);

  std::size_t size() const { return values_.size(); }
  bool observed(std::size_t j) const { return values_[j].has_value(); }
  const std::optional<double>& operator[](std::size_t j) const {
    return values_[j];
  }
  const std::vector<std::optional<double>>& values() const { return values_; }
  ActionVector mask() const;

  bool operator==(const OutcomeVector&) const = default;

 private:
  std::vector<std::optional<double>> values_;
};

// Maps every option to a (u, v) type pair. Options sharing a pair share one
// parameter ("cell"); cells are numbered u * k_v + v.
class TypeStructure {
 public:
  TypeStructure() = default;
  TypeStructure(std::vector<std::size_t> u_of, std::vector<std::size_t> v_of,
                std::size_t k_u, std::size_t k_v);

  // Every option is its own cell: u = j, v = 0.
  static TypeStructure identity(std::size_t d);
  // Options laid out row-major over a k_u x k_v grid: j = u * k_v + v.
  static TypeStructure grid(std::size_t k_u, std::size_t k_v);

  std::size_t options() const { return u_of_.size(); }
  std::size_t k_u() const { return k_u_; }
  std::size_t k_v() const { return k_v_; }
  std::size_t cells() const { return k_u_ * k_v_; }
  std::size_t u_of(std::size_t j) const { return u_of_[j]; }
  std::size_t v_of(std::size_t j) const { return v_of_[j]; }
  std::size_t cell_of(std::size_t j) const { return u_of_[j] * k_v_ + v_of_[j]; }

  // Broadcasts one value per cell to one value per option.
  std::vector<double> broadcast(std::span<const double> cell_values) const;

 private:
  std::vector<std::size_t> u_of_;
  std::vector<std::size_t> v_of_;
  std::size_t k_u_ = 0;
  std::size_t k_v_ = 0;
};

// One observed outcome attributed to a parameter cell.
struct Observation {
  std::size_t cell = 0;
  double value = 0.0;
};

struct HistoryRecord {
  std::size_t period = 0;
  ActionVector action;
  OutcomeVector outcomes;

  bool operator==(const HistoryRecord&) const = default;
};

// Append-only record of (action, observed outcomes) pairs, periods from 1.
class History {
 public:
  History() = default;

  // Appends as period size() + 1.
  void append(ActionVector action, OutcomeVector outcomes);
  // Appends verbatim; validate_history reports any period gaps.
  void append_record(HistoryRecord record);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<HistoryRecord>& records() const { return records_; }
  const HistoryRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t options() const;

  // Every observed entry as a cell observation.
  std::vector<Observation> observations(const TypeStructure& types) const;

  bool operator==(const History&) const = default;

 private:
  std::vector<HistoryRecord> records_;
};

struct HistoryCheck {
  bool ok = true;
  std::vector<std::string> violations;
  explicit operator bool() const { return ok; }
};

// Expected reward <a, theta>. Throws std::invalid_argument on size mismatch.
double reward(const ActionVector& action, std::span<const double> theta);
inline double reward(const ActionVector& action, const ThetaVector& theta) {
  return reward(action, theta.span());
}

HistoryCheck validate_history(const History& history, std::size_t d,
                              std::size_t m);

// CSV: period,option_index,chosen,outcome with one row per (period, option);
// outcome is empty when chosen = 0.
void write_history_csv(std::ostream& out, const History& history);
History read_history_csv(std::istream& in);

// Shortest decimal representation that round-trips.
std::string format_double(double x);

}  // namespace combibandit
