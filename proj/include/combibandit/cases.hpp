#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "combibandit/engine.hpp"

namespace combibandit {

// Thrown with every problem found in a file, one line per diagnostic.
class CaseFormatError : public std::runtime_error {
 public:
  explicit CaseFormatError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

struct CaseRecord {
  std::string case_id;
  int family_size = 1;
  bool working_age = false;
  bool female = false;
  bool english = false;
  bool us_tie = false;
  std::optional<int> tied_affiliate;  // affiliate id as written in the file
  std::size_t arrival_month = 1;
  std::optional<int> employed_90d;

  // working_age * 4 + female * 2 + english.
  std::size_t u_type() const;
  bool operator==(const CaseRecord&) const = default;
};

inline constexpr std::size_t kCaseTypes = 8;

// Header: case_id,family_size,working_age,female,english,us_tie,
// tied_affiliate,arrival_month,employed_90d
std::vector<CaseRecord> read_cases(std::istream& in, const std::string& source = "cases");
std::vector<CaseRecord> ingest_cases(const std::filesystem::path& path);
void write_cases(std::ostream& out, const std::vector<CaseRecord>& cases);

struct AffiliateRecord {
  int id = 0;
  int annual_count = 0;
};
// Header: affiliate_id,annual_count
std::vector<AffiliateRecord> read_affiliates(std::istream& in, const std::string& source = "affiliates");

// Header: u_type,affiliate_id,theta with u_type in 0..7. Returns the k_u x k_v
// table in row-major order over the given affiliate ids; every cell must be
// present.
std::vector<double> read_theta0(std::istream& in, const std::vector<int>& affiliate_ids,
                                const std::string& source = "theta0");

struct CaseScenario {
  ResettlementScenario scenario;
  std::vector<int> affiliate_ids;      // index -> file id
  std::vector<std::string> case_ids;   // family id - 1 -> case_id
  std::size_t dropped_cases = 0;
};

// Affiliates with annual_count below `min_affiliate_count` are dropped along
// with the cases tied to them. theta0 is left empty when not given.
CaseScenario build_case_scenario(const std::vector<CaseRecord>& cases,
                                 const std::vector<AffiliateRecord>& affiliates,
                                 int min_affiliate_count = 0);

// Cases that name an affiliate and report employment, as cell observations
// over the 8 x k_v grid of `built`.
std::vector<Observation> employment_observations(const std::vector<CaseRecord>& cases,
                                                 const CaseScenario& built);

// Writes the families of a scenario in the case format; characteristics are
// decoded from u_type, employment is left empty.
std::vector<CaseRecord> scenario_cases(const ResettlementScenario& scenario);

}  // namespace combibandit
