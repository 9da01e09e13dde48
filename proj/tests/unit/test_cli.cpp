#include <filesystem>
#include <fstream>
#include <sstream>

#include "combibandit/cases.hpp"
#include "combibandit/cli.hpp"
#include "combibandit/config.hpp"
#include "doctest.h"

using namespace combibandit;
namespace fs = std::filesystem;

namespace {

const char* kHeader =
    "case_id,family_size,working_age,female,english,us_tie,tied_affiliate,arrival_month,employed_90d\n";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("combibandit_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return load_config(IniFile::parse(in));
}

}  // namespace

TEST_CASE("case ingestion") {
  std::istringstream ok(std::string(kHeader) +
                        "a,3,1,0,1,0,,1,1\n"
                        "b,1,0,1,0,1,4,2,\n"
                        "c,5,1,1,1,0,,2,0\n");
  auto cases = read_cases(ok);
  REQUIRE(cases.size() == 3);
  CHECK(cases[0].u_type() == 5);  // working_age * 4 + female * 2 + english
  CHECK(cases[1].tied_affiliate == 4);
  CHECK_FALSE(cases[1].employed_90d.has_value());
  CHECK(cases[2].u_type() == 7);

  std::ostringstream out;
  write_cases(out, cases);
  std::istringstream back(out.str());
  CHECK(read_cases(back) == cases);

  std::istringstream tie(std::string(kHeader) + "a,3,1,0,1,0,,1,1\nb,2,0,0,0,1,,1,\n");
  try {
    read_cases(tie, "f.csv");
    FAIL("expected an error");
  } catch (const CaseFormatError& e) {
    REQUIRE(e.diagnostics().size() == 1);
    CHECK(e.diagnostics()[0].find("f.csv:3") != std::string::npos);
    CHECK(e.diagnostics()[0].find("tied_affiliate") != std::string::npos);
  }

  std::istringstream several(std::string(kHeader) + "a,0,1,0,1,0,,1,1\nb,x,2,0,0,0,3,1,\n");
  try {
    read_cases(several);
    FAIL("expected an error");
  } catch (const CaseFormatError& e) {
    CHECK(e.diagnostics().size() >= 3);
  }

  std::istringstream missing("case_id,family_size\n1,2\n");
  CHECK_THROWS_AS(read_cases(missing), CaseFormatError);
}

TEST_CASE("case scenario assembly") {
  std::istringstream cin(std::string(kHeader) +
                         "a,3,1,0,1,0,,1,1\n"
                         "b,1,0,1,0,1,4,2,1\n"
                         "c,2,0,0,0,1,9,3,0\n");
  const auto cases = read_cases(cin);
  std::istringstream ain("affiliate_id,annual_count\n4,100\n9,20\n");
  const auto affiliates = read_affiliates(ain);

  auto all = build_case_scenario(cases, affiliates);
  CHECK(all.scenario.k_u == 8);
  CHECK(all.scenario.k_v() == 2);
  CHECK(all.scenario.months == 3);
  CHECK(all.scenario.families[2].tied_affiliate == 1u);
  CHECK(employment_observations(cases, all).size() == 2);

  auto big = build_case_scenario(cases, affiliates, 50);
  CHECK(big.scenario.k_v() == 1);
  CHECK(big.dropped_cases == 1);
  CHECK(big.scenario.families.size() == 2);

  std::ostringstream theta;
  theta << "u_type,affiliate_id,theta\n";
  for (int u = 0; u < 8; ++u) theta << u << ",4,0.5\n";
  std::istringstream tin(theta.str());
  CHECK(read_theta0(tin, big.affiliate_ids).size() == 8);
  std::istringstream short_in("u_type,affiliate_id,theta\n0,4,0.5\n");
  CHECK_THROWS_AS(read_theta0(short_in, big.affiliate_ids), CaseFormatError);

  std::istringstream dup("affiliate_id,annual_count\n4,100\n4,20\n");
  CHECK_THROWS_AS(read_affiliates(dup), CaseFormatError);
}

TEST_CASE("config parsing") {
  auto c = parse(
      "# comment\n"
      "[run]\nseed = 9\nreplications = 3\n"
      "[scenario]\nset = assignment ; trailing comment\nk = 3\ntheta0 = uniform\n"
      "[model]\nfamily = logit\nrow_effects = false\n"
      "[inference]\ngroup_a = 1,2\nnull = row\n");
  CHECK(c.seed == 9);
  CHECK(c.replications == 3);
  CHECK(c.scenario.set == "assignment");
  CHECK(c.scenario.k == 3);
  CHECK(c.model.family == ModelFamily::logit_hier);
  CHECK_FALSE(c.model.hierarchical.row_effects);
  CHECK(c.inference.group_a == std::vector<std::size_t>{0, 1});
  CHECK(c.inference.null_variant == NullVariant::row);

  auto set = make_feasible_set(c.scenario, c.node_limit);
  CHECK(option_count(set) == 9);
  CHECK(make_type_structure(c.scenario, set).cells() == 9);
  CHECK(make_type_structure(parse("[scenario]\nd = 5\nm = 2\n").scenario, TopM{5, 2}).k_v() == 1);

  CHECK_THROWS_AS(parse("[model]\nfamly = logit\n"), ConfigError);
  CHECK_THROWS_AS(parse("[modle]\nfamily = logit\n"), ConfigError);
  CHECK_THROWS_AS(parse("seed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nseed = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nseed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[scenario]\nset = matching\n"), ConfigError);
  CHECK_THROWS_AS(parse("[inference]\ngroup_a = 0,1\n"), ConfigError);
  try {
    parse("[run]\nseed = 1\n\n[model]\nfamly = logit\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":5:") != std::string::npos);
  }
}

TEST_CASE("resolved config round-trips") {
  auto c = parse(
      "[scenario]\nset = knapsack\nweights = 1,2,3\ncapacities = 4,2\ntheta0 = 0.1,0.25,0.5,0.75,0.2,0.3\n"
      "[model]\nfixed_dispersion = 3.5\n[mcmc]\nwarmup = 17\n[solver]\nnode_limit = 99\n");
  std::ostringstream out;
  write_config(out, c);
  std::ostringstream again;
  write_config(again, parse(out.str()));
  CHECK(out.str() == again.str());
  CHECK(out.str().find("fixed_dispersion = 3.5") != std::string::npos);
  CHECK(std::get<MultipleKnapsack>(make_feasible_set(c.scenario, c.node_limit)).node_limit == 99);
}

TEST_CASE("overrides and relative paths") {
  std::istringstream in("[scenario]\ncases = data/cases.csv\n");
  auto ini = IniFile::parse(in);
  ini.apply_override("run.seed=42");
  ini.apply_override("scenario.cases = /abs/cases.csv");
  auto c = load_config(ini, "/base");
  CHECK(c.seed == 42);
  CHECK(c.scenario.cases == fs::path("/abs/cases.csv"));
  std::istringstream rel("[scenario]\ncases = data/cases.csv\n");
  CHECK(load_config(IniFile::parse(rel), "/base").scenario.cases == fs::path("/base/data/cases.csv"));
  CHECK_THROWS_AS(ini.apply_override("seed=1"), ConfigError);
}

TEST_CASE("bound command writes the curve") {
  const auto dir = scratch("bound");
  std::ostringstream log, err;
  RunManifest m{Command::bound, {}, dir, {}, {}, {"bound.d=4", "bound.m=2", "bound.horizon=100"}};
  REQUIRE(run_command(m, log, err) == kExitOk);
  std::ifstream in(dir / "bound.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,cumulative_bound,per_capita_bound");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 100);
  const auto last = rows.back();
  CHECK(last.rfind("100,26.024", 0) == 0);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "config.ini"));
}

TEST_CASE("simulate twice with one seed gives identical files") {
  const auto a = scratch("sim_a");
  const auto b = scratch("sim_b");
  std::ostringstream log, err;
  std::vector<std::string> o{"scenario.horizon=30", "scenario.set=assignment", "scenario.k=2"};
  REQUIRE(run_command(RunManifest{Command::simulate, {}, a, 5, 2, o}, log, err) == kExitOk);
  REQUIRE(run_command(RunManifest{Command::simulate, {}, b, 5, 2, o}, log, err) == kExitOk);
  for (const auto& entry : fs::directory_iterator(a)) {
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  }
  CHECK(slurp(a / "regret.csv").find("t,mean_cumulative_regret,std_error,theorem1_bound\n") == 0);
}

TEST_CASE("lemmas command passes on the packaged instances") {
  const auto dir = scratch("lemmas");
  std::ostringstream log, err;
  CHECK(run_command(RunManifest{Command::lemmas, {}, dir, {}, {}, {}}, log, err) == kExitOk);
  const auto text = slurp(dir / "lemmas.txt");
  CHECK(text.find("status=fail") == std::string::npos);
  CHECK(text.find("instance=two_point_d2") != std::string::npos);
}

TEST_CASE("resettle and infer commands") {
  const auto dir = scratch("resettle");
  std::ostringstream log, err;
  RunManifest r{Command::resettle, {}, dir, 3, {}, {"scenario.k_v=4", "scenario.months=6", "scenario.arrival_rate=8"}};
  REQUIRE(run_command(r, log, err) == kExitOk);
  CHECK(slurp(dir / "manifest.json").find("\"validator\": \"pass\"") != std::string::npos);

  // Feeding the written families, affiliates and theta0 back in reproduces the run.
  const auto again = scratch("resettle_again");
  RunManifest r2{Command::resettle, {}, again, 3, {}, {"scenario.cases=" + (dir / "families.csv").string(),
                                                     "scenario.affiliates=" + (dir / "affiliates.csv").string(),
                                                     "scenario.theta0_file=" + (dir / "theta0.csv").string()}};
  REQUIRE(run_command(r2, log, err) == kExitOk);
  CHECK(slurp(dir / "placements.csv") == slurp(again / "placements.csv"));

  const auto inf = scratch("infer");
  RunManifest i{Command::infer, {}, inf, 2, {}, {"scenario.horizon=10", "inference.resamples=19"}};
  REQUIRE(run_command(i, log, err) == kExitOk);
  CHECK(slurp(inf / "test_report.txt").find("resamples=19\n") != std::string::npos);

  // The written history can be tested again from file.
  const auto inf2 = scratch("infer_file");
  RunManifest i2{Command::infer, {}, inf2, 2, {}, {"scenario.horizon=10", "inference.resamples=19",
                                                  "inference.history=" + (inf / "history.csv").string()}};
  REQUIRE(run_command(i2, log, err) == kExitOk);
  CHECK(slurp(inf / "resamples.csv") == slurp(inf2 / "resamples.csv"));
}

TEST_CASE("bad input exits nonzero with a structured error") {
  const auto dir = scratch("bad");
  std::ostringstream log, err;
  CHECK(run_command(RunManifest{Command::bound, {}, dir, {}, {}, {"bound.m=9"}}, log, err) == kExitBadInput);
  CHECK(err.str().find("\"error\":\"input\"") != std::string::npos);
  std::ostringstream err2;
  CHECK(run_command(RunManifest{Command::simulate, dir / "missing.ini", dir, {}, {}, {}}, log, err2) == kExitBadInput);
  CHECK(err2.str().find("\"error\":\"config\"") != std::string::npos);
  CHECK_THROWS(parse_command("plot"));
}
