#include "combibandit/cases.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace combibandit {

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += (out.empty() ? "" : "\n") + l;
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_int(const std::string& s, int& out) {
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, out);
  return !s.empty() && res.ec == std::errc() && res.ptr == end;
}

// Reads a header and returns column positions for `wanted`, recording any
// missing column in `errors`.
std::map<std::string, std::size_t> read_header(std::istream& in, const std::vector<std::string>& wanted,
                                               const std::string& source,
                                               std::vector<std::string>& errors) {
  std::map<std::string, std::size_t> pos;
  std::string line;
  if (!std::getline(in, line)) {
    errors.push_back(source + ": empty file");
    return pos;
  }
  const auto cols = split_csv(line);
  for (std::size_t i = 0; i < cols.size(); ++i) pos[cols[i]] = i;
  for (const auto& w : wanted) {
    if (!pos.count(w)) errors.push_back(source + ": missing column '" + w + "'");
  }
  return pos;
}

const std::vector<std::string> kCaseColumns = {"case_id",  "family_size",    "working_age",
                                               "female",   "english",        "us_tie",
                                               "tied_affiliate", "arrival_month", "employed_90d"};

}  // namespace

CaseFormatError::CaseFormatError(std::vector<std::string> diagnostics)
    : std::runtime_error(join_lines(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::size_t CaseRecord::u_type() const {
  return (working_age ? 4U : 0U) + (female ? 2U : 0U) + (english ? 1U : 0U);
}

std::vector<CaseRecord> read_cases(std::istream& in, const std::string& source) {
  std::vector<std::string> errors;
  const auto pos = read_header(in, kCaseColumns, source, errors);
  if (!errors.empty()) throw CaseFormatError(errors);

  std::vector<CaseRecord> out;
  std::size_t line_no = 1;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    auto field = [&](const std::string& name) -> std::string {
      const std::size_t i = pos.at(name);
      return i < f.size() ? f[i] : std::string();
    };
    std::vector<std::string> row_errors;
    auto binary = [&](const std::string& name, bool& target) {
      const auto v = field(name);
      if (v == "0" || v == "1") {
        target = v == "1";
      } else {
        row_errors.push_back(where + name + " must be 0 or 1, got '" + v + "'");
      }
    };

    CaseRecord rec;
    rec.case_id = field("case_id");
    if (rec.case_id.empty()) row_errors.push_back(where + "case_id is empty");
    if (!parse_int(field("family_size"), rec.family_size) || rec.family_size < 1) {
      row_errors.push_back(where + "family_size must be a positive integer, got '" +
                           field("family_size") + "'");
    }
    binary("working_age", rec.working_age);
    binary("female", rec.female);
    binary("english", rec.english);
    binary("us_tie", rec.us_tie);

    const auto tied = field("tied_affiliate");
    if (!tied.empty()) {
      int id = 0;
      if (!parse_int(tied, id) || id < 1) {
        row_errors.push_back(where + "tied_affiliate must be a positive integer id, got '" + tied + "'");
      } else {
        rec.tied_affiliate = id;
      }
    }
    if (rec.us_tie && tied.empty()) row_errors.push_back(where + "us_tie=1 but tied_affiliate is empty");
    if (!rec.us_tie && !tied.empty()) row_errors.push_back(where + "tied_affiliate given but us_tie=0");

    int month = 0;
    if (!parse_int(field("arrival_month"), month) || month < 1) {
      row_errors.push_back(where + "arrival_month must be a positive integer, got '" +
                           field("arrival_month") + "'");
    } else {
      rec.arrival_month = static_cast<std::size_t>(month);
    }
    const auto emp = field("employed_90d");
    if (emp == "0" || emp == "1") {
      rec.employed_90d = emp == "1";
    } else if (!emp.empty()) {
      row_errors.push_back(where + "employed_90d must be 0, 1 or empty, got '" + emp + "'");
    }

    if (row_errors.empty()) {
      out.push_back(std::move(rec));
    } else {
      errors.insert(errors.end(), row_errors.begin(), row_errors.end());
    }
  }
  if (!errors.empty()) throw CaseFormatError(errors);
  return out;
}

std::vector<CaseRecord> ingest_cases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CaseFormatError({"cannot open " + path.string()});
  return read_cases(in, path.string());
}

void write_cases(std::ostream& out, const std::vector<CaseRecord>& cases) {
  for (std::size_t i = 0; i < kCaseColumns.size(); ++i) out << (i ? "," : "") << kCaseColumns[i];
  out << '\n';
  for (const auto& c : cases) {
    out << c.case_id << ',' << c.family_size << ',' << c.working_age << ',' << c.female << ','
        << c.english << ',' << c.us_tie << ',';
    if (c.tied_affiliate) out << *c.tied_affiliate;
    out << ',' << c.arrival_month << ',';
    if (c.employed_90d) out << *c.employed_90d;
    out << '\n';
  }
}

std::vector<AffiliateRecord> read_affiliates(std::istream& in, const std::string& source) {
  std::vector<std::string> errors;
  const auto pos = read_header(in, {"affiliate_id", "annual_count"}, source, errors);
  if (!errors.empty()) throw CaseFormatError(errors);
  std::vector<AffiliateRecord> out;
  std::size_t line_no = 1;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    AffiliateRecord a;
    const auto get = [&](const char* name) {
      const std::size_t i = pos.at(name);
      return i < f.size() ? f[i] : std::string();
    };
    if (!parse_int(get("affiliate_id"), a.id) || a.id < 1) {
      errors.push_back(where + "affiliate_id must be a positive integer");
      continue;
    }
    if (!parse_int(get("annual_count"), a.annual_count) || a.annual_count < 0) {
      errors.push_back(where + "annual_count must be a nonnegative integer");
      continue;
    }
    if (std::any_of(out.begin(), out.end(), [&](const auto& b) { return b.id == a.id; })) {
      errors.push_back(where + "duplicate affiliate_id " + std::to_string(a.id));
      continue;
    }
    out.push_back(a);
  }
  if (!errors.empty()) throw CaseFormatError(errors);
  if (out.empty()) throw CaseFormatError({source + ": no affiliates"});
  return out;
}

std::vector<double> read_theta0(std::istream& in, const std::vector<int>& affiliate_ids,
                                const std::string& source) {
  std::vector<std::string> errors;
  const auto pos = read_header(in, {"u_type", "affiliate_id", "theta"}, source, errors);
  if (!errors.empty()) throw CaseFormatError(errors);
  const std::size_t k_v = affiliate_ids.size();
  std::vector<double> theta(kCaseTypes * k_v, -1.0);
  std::size_t line_no = 1;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    int u = -1, id = 0;
    double value = -1.0;
    const auto get = [&](const char* name) {
      const std::size_t i = pos.at(name);
      return i < f.size() ? f[i] : std::string();
    };
    const auto tv = get("theta");
    auto res = std::from_chars(tv.data(), tv.data() + tv.size(), value);
    if (!parse_int(get("u_type"), u) || u < 0 || u >= static_cast<int>(kCaseTypes)) {
      errors.push_back(where + "u_type must lie in 0..7");
      continue;
    }
    if (!parse_int(get("affiliate_id"), id)) {
      errors.push_back(where + "affiliate_id must be an integer");
      continue;
    }
    if (tv.empty() || res.ec != std::errc() || res.ptr != tv.data() + tv.size() || !(value >= 0.0 && value <= 1.0)) {
      errors.push_back(where + "theta must be a number in [0,1]");
      continue;
    }
    const auto it = std::find(affiliate_ids.begin(), affiliate_ids.end(), id);
    if (it == affiliate_ids.end()) continue;  // dropped or unknown affiliate
    theta[static_cast<std::size_t>(u) * k_v + static_cast<std::size_t>(it - affiliate_ids.begin())] = value;
  }
  for (std::size_t c = 0; c < theta.size(); ++c) {
    if (theta[c] < 0.0) {
      errors.push_back(source + ": no theta for u_type " + std::to_string(c / k_v) + ", affiliate " +
                       std::to_string(affiliate_ids[c % k_v]));
    }
  }
  if (!errors.empty()) throw CaseFormatError(errors);
  return theta;
}

CaseScenario build_case_scenario(const std::vector<CaseRecord>& cases,
                                 const std::vector<AffiliateRecord>& affiliates,
                                 int min_affiliate_count) {
  CaseScenario out;
  auto& s = out.scenario;
  s.k_u = kCaseTypes;
  for (const auto& a : affiliates) {
    if (a.annual_count < min_affiliate_count) continue;
    out.affiliate_ids.push_back(a.id);
    s.affiliates.push_back({"affiliate_" + std::to_string(a.id), a.annual_count});
  }
  if (s.affiliates.empty()) throw CaseFormatError({"every affiliate fell below min_affiliate_count"});

  std::vector<std::string> errors;
  std::size_t months = 0;
  for (const auto& c : cases) {
    Family f;
    if (c.tied_affiliate) {
      const auto it = std::find(out.affiliate_ids.begin(), out.affiliate_ids.end(), *c.tied_affiliate);
      if (it == out.affiliate_ids.end()) {
        const bool listed = std::any_of(affiliates.begin(), affiliates.end(),
                                        [&](const auto& a) { return a.id == *c.tied_affiliate; });
        if (listed) {
          ++out.dropped_cases;
        } else {
          errors.push_back("case " + c.case_id + ": tied_affiliate " +
                           std::to_string(*c.tied_affiliate) + " is not in the affiliates file");
        }
        continue;
      }
      f.tied_affiliate = static_cast<std::size_t>(it - out.affiliate_ids.begin());
    }
    f.id = s.families.size() + 1;
    f.size = c.family_size;
    f.u_type = c.u_type();
    f.us_tie = c.us_tie;
    f.arrival_month = c.arrival_month;
    months = std::max(months, c.arrival_month);
    s.families.push_back(f);
    out.case_ids.push_back(c.case_id);
  }
  if (!errors.empty()) throw CaseFormatError(errors);
  s.months = std::max<std::size_t>(months, 1);
  return out;
}

std::vector<Observation> employment_observations(const std::vector<CaseRecord>& cases,
                                                 const CaseScenario& built) {
  std::vector<Observation> obs;
  const std::size_t k_v = built.affiliate_ids.size();
  for (const auto& c : cases) {
    if (!c.tied_affiliate || !c.employed_90d) continue;
    const auto it = std::find(built.affiliate_ids.begin(), built.affiliate_ids.end(), *c.tied_affiliate);
    if (it == built.affiliate_ids.end()) continue;
    obs.push_back({c.u_type() * k_v + static_cast<std::size_t>(it - built.affiliate_ids.begin()),
                   static_cast<double>(*c.employed_90d)});
  }
  return obs;
}

std::vector<CaseRecord> scenario_cases(const ResettlementScenario& scenario) {
  if (scenario.k_u > kCaseTypes) {
    throw std::invalid_argument("the case format encodes at most 8 refugee types");
  }
  std::vector<CaseRecord> out;
  for (const auto& f : scenario.families) {
    CaseRecord c;
    c.case_id = std::to_string(f.id);
    c.family_size = f.size;
    c.working_age = (f.u_type & 4U) != 0;
    c.female = (f.u_type & 2U) != 0;
    c.english = (f.u_type & 1U) != 0;
    c.us_tie = f.us_tie;
    if (f.tied_affiliate) c.tied_affiliate = static_cast<int>(*f.tied_affiliate + 1);
    c.arrival_month = f.arrival_month;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace combibandit
