import math

import numpy as np
import pytest

import combibandit as cb


def test_top_m_and_ties():
    assert cb.solve_top_m([0.2, 0.9, 0.9, 0.1], 2) == [1, 2]
    sol = cb.solve(cb.TopM(4, 2), [0.5, 0.5, 0.5, 0.5])
    assert sol.action.selected() == [0, 1]
    assert sol.value == pytest.approx(1.0)


def test_assignment_matches_enumeration():
    rng = np.random.default_rng(3)
    theta = rng.random(9).tolist()
    best = max(cb.reward(a, theta) for a in cb.enumerate_feasible(cb.Assignment(3)))
    assert cb.solve(cb.Assignment(3), theta).value == pytest.approx(best)
    assert cb.solve_assignment([[1.0, 0.0], [0.0, 1.0]]).value == pytest.approx(2.0)


def test_knapsack_reports_optimality():
    sol = cb.solve(cb.MultipleKnapsack([3, 2, 2], [4]), [0.9, 0.5, 0.6])
    assert sol.proven_optimal
    assert sol.value == pytest.approx(1.1)
    assert sol.unassigned == [0]


def test_bad_descriptor_raises():
    with pytest.raises(ValueError):
        cb.solve(cb.TopM(2, 3), [0.1, 0.2])


def test_bounds():
    assert cb.theorem1_bound(4, 2, 100) == pytest.approx(26.024, abs=1e-3)
    assert cb.per_capita_bound(3, 3, 1) == pytest.approx(math.sqrt(0.5), abs=1e-5)
    assert cb.bernoulli_kl(0.5, 0.5) == 0.0


def test_episode_is_reproducible():
    env = cb.Environment([0.2, 0.4, 0.6, 0.8])
    spec = cb.ModelSpec()
    a = cb.run_episode(env, spec, cb.TopM(4, 2), horizon=50, seed=11)
    b = cb.run_episode(env, spec, cb.TopM(4, 2), horizon=50, seed=11)
    assert a.to_csv() == b.to_csv()
    assert len(a.periods) == 50
    regret = a.cumulative_regret()
    assert all(x <= y + 1e-12 for x, y in zip(regret, regret[1:]))
    assert a.oracle_action.selected() == [2, 3]


def test_replications_array():
    curves = cb.replicate_regret(cb.Environment([0.3, 0.7]), cb.ModelSpec(), cb.TopM(2, 1),
                                 horizon=20, replications=4, seed=2)
    assert isinstance(curves, np.ndarray)
    assert curves.shape == (4, 20)
    assert (curves >= 0).all()


def test_mcmc_gaussian_cell_mean():
    prior = cb.HierarchicalPrior()
    prior.row_effects = False
    prior.col_effects = False
    prior.fixed_mu = 0.0
    prior.fixed_tau_uv_sq = 1.0
    prior.fixed_sigma_sq = 1.0
    settings = cb.McmcSettings()
    settings.warmup = 200
    draws = cb.mcmc_sample(cb.ModelFamily.gaussian_hier, [(0, 1.0)], cb.TypeStructure.grid(1, 1),
                           prior, 4000, settings, seed=5)
    assert draws.shape == (4000, 1)
    assert abs(draws.mean() - 0.5) < 0.06


def test_randomization_test_with_python_statistic():
    env = cb.Environment([0.5] * 4)
    traj = cb.run_episode(env, cb.ModelSpec(), cb.TopM(4, 2), horizon=10, seed=3)
    history = traj.history()

    def total(h):
        return sum(y for row in h.outcomes() for y in row if y is not None)

    by_python = cb.randomization_test(history, cb.ModelSpec(), cb.TopM(4, 2), statistic=total,
                                      resamples=19, seed=4)
    assert len(by_python.resamples) == 19
    assert 1 / 20 <= by_python.p_value <= 1.0
    grouped = cb.randomization_test(history, cb.ModelSpec(), cb.TopM(4, 2), group_a=[0, 1],
                                    group_b=[2, 3], resamples=19, seed=4)
    again = cb.randomization_test(history, cb.ModelSpec(), cb.TopM(4, 2), group_a=[0, 1],
                                  group_b=[2, 3], resamples=19, seed=4)
    assert grouped.resamples == again.resamples


def test_history_csv_round_trip():
    h = cb.History()
    h.append(cb.ActionVector.from_bits([1, 0, 1]), [1.0, None, 0.0])
    assert cb.History.from_csv(h.to_csv()).to_csv() == h.to_csv()


def test_resettlement_runs_clean():
    scenario = cb.generate_synthetic_scenario(8, 4, 6, 8.0, seed=9)
    result = cb.run_resettlement(scenario, cb.ModelSpec(), seed=9)
    assert cb.validate_resettlement(scenario, result) == []
    assert cb.check_conservation(result)
    assert result.placements_csv() == cb.run_resettlement(scenario, cb.ModelSpec(), seed=9).placements_csv()


def test_lemmas_hold():
    reports = cb.verify_packaged_lemmas(3)
    assert len(reports) == 3
    assert all(r.ok() for r in reports)


def test_run_command(tmp_path):
    code, _, err = cb.run_command("bound", tmp_path, overrides=["bound.horizon=10"])
    assert code == 0, err
    assert (tmp_path / "bound.csv").read_text().count("\n") == 11
    code, _, err = cb.run_command("bound", tmp_path, overrides=["bound.nope=1"])
    assert code == 2
    assert '"error"' in err
