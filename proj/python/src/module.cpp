#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <sstream>

#include "combibandit/cli.hpp"
#include "combibandit/domain.hpp"
#include "combibandit/engine.hpp"
#include "combibandit/inference.hpp"
#include "combibandit/metrics.hpp"
#include "combibandit/posterior.hpp"
#include "combibandit/solvers.hpp"

namespace py = pybind11;
using namespace combibandit;

namespace {

py::array_t<double> to_matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows[0].size() : 0;
  py::array_t<double> out({r, c});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) view(i, j) = rows[i][j];
  return out;
}

template <class F>
std::string to_text(F&& write) {
  std::ostringstream out;
  write(out);
  return out.str();
}

TypeStructure default_types(const FeasibleSet& set) {
  if (const auto* a = std::get_if<Assignment>(&set)) return TypeStructure::grid(a->k, a->k);
  if (const auto* c = std::get_if<Capacitated>(&set))
    return TypeStructure::grid(c->items, c->capacities.size());
  if (const auto* k = std::get_if<MultipleKnapsack>(&set))
    return TypeStructure::grid(k->weights.size(), k->capacities.size());
  return TypeStructure::identity(option_count(set));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Combinatorial Thompson sampling core";

  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_ValueError);
  py::register_exception<EnumerationLimitError>(m, "EnumerationLimitError", PyExc_RuntimeError);

  m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("index"));

  py::class_<ActionVector>(m, "ActionVector")
      .def(py::init<std::size_t>(), py::arg("d"))
      .def_static("from_bits", &ActionVector::from_bits, py::arg("bits"))
      .def_static("from_indices",
                  [](std::size_t d, const std::vector<std::size_t>& idx) {
                    return ActionVector::from_indices(d, idx);
                  },
                  py::arg("d"), py::arg("selected"))
      .def("__len__", &ActionVector::size)
      .def("__getitem__",
           [](const ActionVector& a, std::size_t j) {
             if (j >= a.size()) throw py::index_error();
             return a[j];
           })
      .def("count", &ActionVector::count)
      .def("selected", &ActionVector::selected)
      .def_property_readonly("bits", &ActionVector::bits)
      .def(py::self == py::self)
      .def("__repr__", [](const ActionVector& a) {
        std::string s = "ActionVector(";
        for (auto b : a.bits()) s += b ? '1' : '0';
        return s + ")";
      });

  py::class_<TypeStructure>(m, "TypeStructure")
      .def(py::init<std::vector<std::size_t>, std::vector<std::size_t>, std::size_t, std::size_t>(),
           py::arg("u_of"), py::arg("v_of"), py::arg("k_u"), py::arg("k_v"))
      .def_static("identity", &TypeStructure::identity, py::arg("d"))
      .def_static("grid", &TypeStructure::grid, py::arg("k_u"), py::arg("k_v"))
      .def_property_readonly("options", &TypeStructure::options)
      .def_property_readonly("k_u", &TypeStructure::k_u)
      .def_property_readonly("k_v", &TypeStructure::k_v)
      .def_property_readonly("cells", &TypeStructure::cells)
      .def("cell_of", &TypeStructure::cell_of);

  py::class_<History>(m, "History")
      .def(py::init<>())
      .def("append",
           [](History& h, const ActionVector& a, std::vector<std::optional<double>> y) {
             h.append(a, OutcomeVector(std::move(y)));
           },
           py::arg("action"), py::arg("outcomes"))
      .def("__len__", &History::size)
      .def_property_readonly("options", &History::options)
      .def("actions",
           [](const History& h) {
             std::vector<ActionVector> out;
             for (const auto& r : h.records()) out.push_back(r.action);
             return out;
           })
      .def("outcomes",
           [](const History& h) {
             std::vector<std::vector<std::optional<double>>> out;
             for (const auto& r : h.records()) out.push_back(r.outcomes.values());
             return out;
           })
      .def("to_csv", [](const History& h) { return to_text([&](auto& o) { write_history_csv(o, h); }); })
      .def_static("from_csv", [](const std::string& text) {
        std::istringstream in(text);
        return read_history_csv(in);
      });

  // Feasible sets
  py::class_<TopM>(m, "TopM")
      .def(py::init([](std::size_t d, std::size_t mm) { return TopM{d, mm}; }), py::arg("d"), py::arg("m"))
      .def_readwrite("d", &TopM::d)
      .def_readwrite("m", &TopM::m);
  py::class_<Assignment>(m, "Assignment")
      .def(py::init([](std::size_t k) { return Assignment{k}; }), py::arg("k"))
      .def_readwrite("k", &Assignment::k);
  py::class_<Capacitated>(m, "Capacitated")
      .def(py::init([](std::size_t items, std::vector<int> caps) { return Capacitated{items, std::move(caps)}; }),
           py::arg("items"), py::arg("capacities"))
      .def_readwrite("items", &Capacitated::items)
      .def_readwrite("capacities", &Capacitated::capacities);
  py::class_<MultipleKnapsack>(m, "MultipleKnapsack")
      .def(py::init([](std::vector<int> w, std::vector<int> c, std::size_t limit) {
             return MultipleKnapsack{std::move(w), std::move(c), limit};
           }),
           py::arg("weights"), py::arg("capacities"), py::arg("node_limit") = MultipleKnapsack{}.node_limit)
      .def_readwrite("weights", &MultipleKnapsack::weights)
      .def_readwrite("capacities", &MultipleKnapsack::capacities)
      .def_readwrite("node_limit", &MultipleKnapsack::node_limit);
  py::class_<Explicit>(m, "Explicit")
      .def(py::init([](std::size_t d, std::vector<ActionVector> actions) { return Explicit{d, std::move(actions)}; }),
           py::arg("d"), py::arg("actions"))
      .def_readwrite("d", &Explicit::d)
      .def_readwrite("actions", &Explicit::actions);

  py::class_<Solution>(m, "Solution")
      .def_readonly("action", &Solution::action)
      .def_readonly("value", &Solution::value)
      .def_readonly("unassigned", &Solution::unassigned)
      .def_readonly("proven_optimal", &Solution::proven_optimal)
      .def_readonly("bound", &Solution::bound);

  m.def("option_count", &option_count, py::arg("set"));
  m.def("batch_size", &batch_size, py::arg("set"));
  m.def("default_types", &default_types, py::arg("set"));
  m.def("solve",
        [](const FeasibleSet& set, const std::vector<double>& theta) {
          check_feasible_set(set);
          return solve(set, theta);
        },
        py::arg("set"), py::arg("theta_hat"));
  m.def("solve_assignment", py::overload_cast<const std::vector<std::vector<double>>&>(&solve_assignment),
        py::arg("matrix"));
  m.def("enumerate_feasible", &enumerate_feasible, py::arg("set"), py::arg("limit") = 1'000'000);
  m.def("is_feasible",
        [](const FeasibleSet& set, const ActionVector& a) { return is_feasible(set, a); },
        py::arg("set"), py::arg("action"));
  m.def("reward", [](const ActionVector& a, const std::vector<double>& theta) { return reward(a, theta); },
        py::arg("action"), py::arg("theta"));

  // Posterior models
  py::enum_<ModelFamily>(m, "ModelFamily")
      .value("beta_bernoulli", ModelFamily::beta_bernoulli)
      .value("gaussian_hier", ModelFamily::gaussian_hier)
      .value("logit_hier", ModelFamily::logit_hier)
      .value("beta_binomial_hier", ModelFamily::beta_binomial_hier);

  py::class_<HierarchicalPrior>(m, "HierarchicalPrior")
      .def(py::init<>())
      .def_readwrite("row_effects", &HierarchicalPrior::row_effects)
      .def_readwrite("col_effects", &HierarchicalPrior::col_effects)
      .def_readwrite("mu_sd", &HierarchicalPrior::mu_sd)
      .def_readwrite("tau_scale", &HierarchicalPrior::tau_scale)
      .def_readwrite("sigma_scale", &HierarchicalPrior::sigma_scale)
      .def_readwrite("y_bar", &HierarchicalPrior::y_bar)
      .def_readwrite("fixed_mu", &HierarchicalPrior::fixed_mu)
      .def_readwrite("fixed_tau_u_sq", &HierarchicalPrior::fixed_tau_u_sq)
      .def_readwrite("fixed_tau_v_sq", &HierarchicalPrior::fixed_tau_v_sq)
      .def_readwrite("fixed_tau_uv_sq", &HierarchicalPrior::fixed_tau_uv_sq)
      .def_readwrite("fixed_sigma_sq", &HierarchicalPrior::fixed_sigma_sq)
      .def_readwrite("fixed_dispersion", &HierarchicalPrior::fixed_dispersion);

  py::class_<McmcSettings>(m, "McmcSettings")
      .def(py::init<>())
      .def_readwrite("warmup", &McmcSettings::warmup)
      .def_readwrite("thin", &McmcSettings::thin)
      .def_readwrite("target_accept", &McmcSettings::target_accept);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](ModelFamily family) {
             ModelSpec s;
             s.family = family;
             return s;
           }),
           py::arg("family") = ModelFamily::beta_bernoulli)
      .def_readwrite("family", &ModelSpec::family)
      .def_readwrite("prior_alpha", &ModelSpec::prior_alpha)
      .def_readwrite("prior_beta", &ModelSpec::prior_beta)
      .def_readwrite("hierarchical", &ModelSpec::hierarchical)
      .def_readwrite("mcmc", &ModelSpec::mcmc)
      .def_readwrite("refresh_every", &ModelSpec::refresh_every);

  m.def("mcmc_sample",
        [](ModelFamily family, const std::vector<std::pair<std::size_t, double>>& obs,
           const TypeStructure& types, const HierarchicalPrior& prior, std::size_t n_draws,
           const McmcSettings& settings, std::uint64_t seed) {
          std::vector<Observation> o;
          for (auto [cell, y] : obs) o.push_back({cell, y});
          Rng rng(seed);
          PosteriorDraws draws;
          {
            py::gil_scoped_release release;
            draws = mcmc_sample(family, o, types, prior, n_draws, settings, rng);
          }
          return to_matrix(draws.draws);
        },
        py::arg("family"), py::arg("observations"), py::arg("types"),
        py::arg("prior") = HierarchicalPrior{}, py::arg("n_draws") = 1000,
        py::arg("settings") = McmcSettings{}, py::arg("seed") = 1);

  // Environment and Thompson loop
  py::enum_<OutcomeFamily>(m, "OutcomeFamily")
      .value("bernoulli", OutcomeFamily::bernoulli)
      .value("gaussian_truncated", OutcomeFamily::gaussian_truncated)
      .value("beta_binomial", OutcomeFamily::beta_binomial);

  py::class_<Environment>(m, "Environment")
      .def(py::init([](std::vector<double> theta0, OutcomeFamily family, double sigma_sq,
                       double dispersion, int y_bar) {
             return Environment{ThetaVector(std::move(theta0)), family, sigma_sq, dispersion, y_bar};
           }),
           py::arg("theta0"), py::arg("family") = OutcomeFamily::bernoulli, py::arg("sigma_sq") = 0.01,
           py::arg("dispersion") = 10.0, py::arg("y_bar") = 1)
      .def_property_readonly("theta0", [](const Environment& e) { return e.theta0.values(); })
      .def("draw", [](const Environment& e, std::uint64_t seed) {
        Rng rng(seed);
        return e.draw(rng);
      });

  py::class_<PeriodRecord>(m, "PeriodRecord")
      .def_readonly("period", &PeriodRecord::period)
      .def_readonly("action", &PeriodRecord::action)
      .def_property_readonly("outcomes", [](const PeriodRecord& p) { return p.outcomes.values(); })
      .def_readonly("theta_hat", &PeriodRecord::theta_hat)
      .def_readonly("expected_regret", &PeriodRecord::expected_regret)
      .def_readonly("realized_reward", &PeriodRecord::realized_reward);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("periods", &Trajectory::periods)
      .def_readonly("oracle_action", &Trajectory::oracle_action)
      .def_readonly("oracle_value", &Trajectory::oracle_value)
      .def("cumulative_regret", &Trajectory::cumulative_regret)
      .def("history", &Trajectory::history)
      .def("to_csv", [](const Trajectory& t) { return to_text([&](auto& o) { write_trajectory_csv(o, t); }); });

  m.def("oracle_action",
        [](const std::vector<double>& theta0, const FeasibleSet& set) {
          auto r = oracle_action(ThetaVector(theta0), set);
          return py::make_tuple(r.action, r.value);
        },
        py::arg("theta0"), py::arg("set"));

  m.def("run_episode",
        [](const Environment& env, const ModelSpec& spec, const FeasibleSet& set,
           std::optional<TypeStructure> types, std::size_t horizon, std::uint64_t seed) {
          check_feasible_set(set);
          const auto t = types ? *types : default_types(set);
          py::gil_scoped_release release;
          return run_episode(env, spec, set, t, horizon, seed);
        },
        py::arg("env"), py::arg("spec"), py::arg("set"), py::arg("types") = py::none(),
        py::arg("horizon"), py::arg("seed") = 1);

  m.def("replicate_regret",
        [](const Environment& env, const ModelSpec& spec, const FeasibleSet& set,
           std::optional<TypeStructure> types, std::size_t horizon, std::size_t replications,
           std::uint64_t seed) {
          check_feasible_set(set);
          const auto t = types ? *types : default_types(set);
          std::vector<std::vector<double>> curves;
          {
            py::gil_scoped_release release;
            curves = replicate_regret(env, spec, set, t, horizon, replications, seed);
          }
          return to_matrix(curves);
        },
        py::arg("env"), py::arg("spec"), py::arg("set"), py::arg("types") = py::none(),
        py::arg("horizon"), py::arg("replications"), py::arg("seed") = 1);

  // Resettlement
  py::class_<ResettlementScenario>(m, "ResettlementScenario")
      .def_readonly("months", &ResettlementScenario::months)
      .def_readonly("k_u", &ResettlementScenario::k_u)
      .def_property_readonly("k_v", &ResettlementScenario::k_v)
      .def_property_readonly("family_count", [](const ResettlementScenario& s) { return s.families.size(); })
      .def_readwrite("theta0", &ResettlementScenario::theta0);

  py::class_<ResettlementResult>(m, "ResettlementResult")
      .def_property_readonly("months", [](const ResettlementResult& r) { return r.months.size(); })
      .def("cumulative_regret", &ResettlementResult::cumulative_regret)
      .def("placements_csv",
           [](const ResettlementResult& r) { return to_text([&](auto& o) { write_placements_csv(o, r); }); })
      .def("summary_csv", [](const ResettlementResult& r) {
        return to_text([&](auto& o) { write_resettlement_summary_csv(o, r); });
      });

  m.def("generate_synthetic_scenario",
        [](std::size_t k_u, std::size_t k_v, std::size_t months, double rate, std::uint64_t seed) {
          return generate_synthetic_scenario(k_u, k_v, months, rate, seed);
        },
        py::arg("k_u") = 8, py::arg("k_v") = 17, py::arg("months") = 24, py::arg("arrival_rate") = 30.0,
        py::arg("seed") = 1);
  m.def("run_resettlement",
        [](const ResettlementScenario& s, const ModelSpec& spec, std::uint64_t seed) {
          py::gil_scoped_release release;
          return run_resettlement(s, spec, seed);
        },
        py::arg("scenario"), py::arg("spec") = ModelSpec{}, py::arg("seed") = 1);
  m.def("validate_resettlement",
        [](const ResettlementScenario& s, const ResettlementResult& r) {
          return validate_resettlement(s, r).violations;
        },
        py::arg("scenario"), py::arg("result"));
  m.def("check_conservation", &check_conservation, py::arg("result"));

  // Metrics
  m.def("bernoulli_entropy", &bernoulli_entropy, py::arg("p"));
  m.def("bernoulli_kl", &bernoulli_kl, py::arg("p"), py::arg("q"));
  m.def("theorem1_bound", py::overload_cast<std::size_t, std::size_t, std::size_t>(&theorem1_bound),
        py::arg("d"), py::arg("m"), py::arg("t"));
  m.def("per_capita_bound",
        [](std::size_t d, std::size_t mm, std::size_t t) { return per_capita_bound(BoundSpec{d, mm, t}, t); },
        py::arg("d"), py::arg("m"), py::arg("t"));
  m.def("entropy_budget", &entropy_budget, py::arg("d"), py::arg("m"));

  py::class_<LemmaReport>(m, "LemmaReport")
      .def_readonly("instance", &LemmaReport::instance)
      .def_readonly("depth", &LemmaReport::depth)
      .def_readonly("nodes", &LemmaReport::nodes)
      .def_readonly("lemma1_failures", &LemmaReport::lemma1_failures)
      .def_readonly("lemma2_failures", &LemmaReport::lemma2_failures)
      .def_readonly("pinsker_failures", &LemmaReport::pinsker_failures)
      .def_readonly("information_sum", &LemmaReport::information_sum)
      .def_readonly("root_entropy", &LemmaReport::root_entropy)
      .def_readonly("budget", &LemmaReport::budget)
      .def_readonly("lemma3_holds", &LemmaReport::lemma3_holds)
      .def_readonly("chain_rule_holds", &LemmaReport::chain_rule_holds)
      .def("ok", &LemmaReport::ok);

  m.def("verify_packaged_lemmas",
        [](std::size_t depth) {
          std::vector<LemmaReport> out;
          py::gil_scoped_release release;
          for (const auto& inst : packaged_lemma_instances()) out.push_back(verify_lemma_properties(inst, depth));
          return out;
        },
        py::arg("depth") = 3);

  // Inference
  py::class_<TestResult>(m, "TestResult")
      .def_property_readonly("variant", [](const TestResult& r) { return to_string(r.variant); })
      .def_readonly("observed", &TestResult::observed)
      .def_readonly("resamples", &TestResult::resamples)
      .def_readonly("p_value", &TestResult::p_value);

  m.def("permutation_p_value", &permutation_p_value, py::arg("observed"), py::arg("resamples"));
  m.def("randomization_test",
        [](const History& history, const ModelSpec& spec, const FeasibleSet& set,
           std::optional<TypeStructure> types, const std::string& null, py::object statistic,
           std::optional<std::vector<std::size_t>> group_a, std::optional<std::vector<std::size_t>> group_b,
           bool two_sided, std::size_t resamples, std::uint64_t seed) {
          check_feasible_set(set);
          const auto t = types ? *types : default_types(set);
          Statistic stat;
          if (!statistic.is_none()) {
            // Worker threads call back into Python one at a time under the GIL.
            // Shared ownership keeps copies of the statistic off the Python
            // reference count, which worker threads may not touch unlocked.
            auto fn = std::shared_ptr<py::function>(new py::function(statistic.cast<py::function>()),
                                                    [](py::function* f) {
                                                      py::gil_scoped_acquire acquire;
                                                      delete f;
                                                    });
            stat = [fn](const History& h) {
              py::gil_scoped_acquire acquire;
              return (*fn)(h).template cast<double>();
            };
          } else if (group_a && group_b) {
            stat = group_mean_difference(*group_a, *group_b);
          } else {
            stat = mean_outcome();
          }
          if (two_sided) stat = absolute(stat);
          py::gil_scoped_release release;
          return randomization_test(history, spec, set, t, NullSpec{parse_null_variant(null)}, stat,
                                    resamples, seed);
        },
        py::arg("history"), py::arg("spec"), py::arg("set"), py::arg("types") = py::none(),
        py::arg("null") = "global", py::arg("statistic") = py::none(), py::arg("group_a") = py::none(),
        py::arg("group_b") = py::none(), py::arg("two_sided") = false, py::arg("resamples") = 199,
        py::arg("seed") = 1);

  // Command-line entry point
  m.def("run_command",
        [](const std::string& command, const std::filesystem::path& output_dir,
           std::optional<std::filesystem::path> config, std::optional<std::uint64_t> seed,
           std::optional<std::size_t> replications, std::vector<std::string> overrides) {
          RunManifest manifest{parse_command(command), config.value_or(std::filesystem::path{}), output_dir,
                               seed, replications, std::move(overrides)};
          std::ostringstream log, err;
          int code = 0;
          {
            py::gil_scoped_release release;
            code = run_command(manifest, log, err);
          }
          return py::make_tuple(code, log.str(), err.str());
        },
        py::arg("command"), py::arg("output_dir"), py::arg("config") = py::none(), py::arg("seed") = py::none(),
        py::arg("replications") = py::none(), py::arg("overrides") = std::vector<std::string>{});
}
