import math
from dataclasses import replace

import numpy as np
import pytest

from divpop.diversity import DiversityTarget
from divpop.mdp import random_mdp
from divpop.trainer import (AblationGrid, TrainConfig, bandit_reward, init_state, run,
                            run_ablation, train, train_step)


def records_equal(a, b):
    return len(a) == len(b) and all(x == y for x, y in zip(a, b))


def test_config_validation():
    with pytest.raises(ValueError, match="n_policies"):
        TrainConfig(n_policies=1)
    with pytest.raises(ValueError, match="max_iterations"):
        TrainConfig(max_iterations=0)
    with pytest.raises(ValueError, match="selector"):
        TrainConfig(selector="thompson")
    with pytest.raises(ValueError, match="simplex"):
        TrainConfig(reward="behavior")
    assert TrainConfig().lr == 0.5
    assert TrainConfig(mode="logits").lr == 0.1
    assert TrainConfig(delta=0.7).target.per_policy_delta == 0.7


@pytest.mark.parametrize("cfg", [
    TrainConfig(max_iterations=30, stop_at_target=False),
    TrainConfig(mode="logits", selector="bandit-linucb", max_iterations=20, seed=3),
    TrainConfig(mode="logits", reward="diayn-empirical", update="sampled", selector="bandit-ucb1",
                max_iterations=15, seed=4),
    TrainConfig(mode="logits", reward="behavior", selector="bandit-egreedy", max_iterations=10),
    TrainConfig(reward="dgpo", selector="iteration", objective="f_sum", max_iterations=20),
])
def test_runs_are_deterministic(cfg):
    assert records_equal(run(cfg), run(cfg))


def test_different_seeds_differ():
    a = run(TrainConfig(max_iterations=10, seed=0, stop_at_target=False))
    b = run(TrainConfig(max_iterations=10, seed=1, stop_at_target=False))
    assert not records_equal(a, b)


@pytest.mark.parametrize("mode", ["simplex", "logits"])
def test_one_step_changes_one_slice(mode):
    cfg = TrainConfig(mode=mode, n_policies=4, seed=2)
    state = init_state(cfg)
    before = np.array(state.population.points if mode == "simplex" else state.population.logits)
    state, rec = train_step(state, cfg)
    after = state.population.points if mode == "simplex" else state.population.logits
    changed = [z for z in range(4) if not np.array_equal(before[z], after[z])]
    assert changed == [rec.selected_z]


def test_mutual_information_grows_on_three_state_mdp():
    cfg = TrainConfig(mode="logits", max_iterations=200, stop_at_target=False, step_size=0.5)
    tr = train(cfg)
    assert len(tr.records) == 200
    assert tr.records[-1].mi > tr.initial_objective


def test_record_fields():
    recs = run(TrainConfig(n_policies=4, max_iterations=5, stop_at_target=False))
    assert [r.iteration for r in recs] == [1, 2, 3, 4, 5]
    for r in recs:
        assert len(r.scores) == 4
        assert r.mi == pytest.approx(np.mean(r.scores))
        assert 0 <= r.selected_z < 4


def test_unreachable_delta_caps_iterations():
    recs = run(TrainConfig(delta=5.0, max_iterations=5))
    assert len(recs) == 5
    assert not any(r.target_reached for r in recs)


def test_zero_delta_stops_after_first_step():
    recs = run(TrainConfig(delta=0.0, max_iterations=50))
    assert len(recs) == 1 and recs[0].target_reached


def test_bandit_reward_modes():
    target = DiversityTarget(0.8)
    assert bandit_reward([0.9, 0.1], [0.95, 0.1], 0, target) == 0.0
    assert bandit_reward([0.9, 0.1], [0.9, 0.3], 1, target) == 1.0
    assert bandit_reward([0.2, 0.1], [0.2, 0.1], 0, target, "delta-f", 0.4, 0.4) == 0.0
    assert bandit_reward([0.2, 0.1], [0.2, 0.1], 0, target, "delta-f", 0.4, 0.1) == 0.0
    assert bandit_reward([0.2, 0.1], [0.2, 0.1], 0, target, "delta-f", 0.4, 0.6) == \
        pytest.approx(0.2)
    with pytest.raises(ValueError):
        bandit_reward([0.0], [0.0], 0, target, "other")


def test_binary_rewards_count_useful_selections_and_absorb():
    cfg = TrainConfig(n_policies=4, selector="bandit-linucb", delta=0.5, max_iterations=150,
                      stop_at_target=False, context="extended", shared=True)
    state = init_state(cfg)
    useful, satisfied_at = 0, None
    for t in range(cfg.max_iterations):
        prev = state.scores.copy()
        state, rec = train_step(state, cfg)
        useful += prev[rec.selected_z] < 0.5
        if satisfied_at is not None:
            assert rec.bandit_reward == 0.0
        if satisfied_at is None and np.all(state.scores >= 0.5):
            satisfied_at = t
    assert satisfied_at is not None
    ledger = state.ledger
    assert sum(ledger.chosen_rewards) == useful
    assert set(ledger.chosen_rewards) <= {0.0, 1.0}
    assert set(ledger.optimal_rewards) <= {0.0, 1.0}
    assert np.all(np.subtract(ledger.optimal_rewards, ledger.chosen_rewards) >= 0)


def test_monotone_window_in_simplex_mode():
    tr = train(TrainConfig(max_iterations=300, stop_at_target=False, seed=5))
    trace = np.concatenate([[tr.initial_objective], tr.objective_trace()])
    assert np.all(trace[5:] >= trace[:-5] - 1e-3)


def test_iterations_to_target_convention():
    tr = train(TrainConfig(delta=5.0, max_iterations=7))
    assert tr.iterations_to_target == 7
    tr = train(TrainConfig(delta=0.5, max_iterations=200))
    assert tr.iterations_to_target == len(tr.records)


def test_random_mdp_logits_run():
    cfg = TrainConfig(mdp=random_mdp(5, 3, 0.8, rng=1), n_policies=3, mode="logits",
                      selector="bandit-linucb", max_iterations=40, stop_at_target=False)
    recs = run(cfg)
    assert all(np.isfinite(r.mi) and 0 <= r.mi <= math.log(3) + 1e-12 for r in recs)


def test_ablation_grid_shape():
    grid = AblationGrid()
    assert len(list(grid.jobs())) == 18
    small = AblationGrid(base=replace(grid.base, max_iterations=12), seeds=(0, 1))
    report = run_ablation(small)
    assert len(report.results) == 6
    rows = list(report.rows())
    assert len(rows) == 6 * 12
    summary = report.summary()
    assert [s["selector"] for s in summary] == list(small.selectors)
    assert all(s["median_iterations_to_target"] == 12 for s in summary)
    assert report.mean_curve("uniform", 8, 0.8).shape == (12,)
    with pytest.raises(ValueError):
        AblationGrid(selectors=("uniform",))


def test_ablation_parallel_matches_serial():
    grid = AblationGrid(base=replace(AblationGrid().base, max_iterations=15), seeds=(0, 1))
    serial, parallel = run_ablation(grid), run_ablation(grid, workers=2)
    for a, b in zip(serial.results, parallel.results):
        assert a.key == b.key
        np.testing.assert_array_equal(a.objective, b.objective)
