import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divpop.mdp import (Trajectory, make_three_state_mdp, occupancy_measure, random_mdp,
                        rollouts)
from divpop.population import (LatentPolicy, LatentPrior, ReplayBuffer, SimplexPopulation,
                               average_occupancy, policy_gradient, policy_objective,
                               policy_occupancies, reinforce_gradient, softmax,
                               update_policy_exact, update_simplex)


def finite_difference(fn, x, h=1e-5):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (fn(up) - fn(down)) / (2 * h)
    return grad


def test_identical_logits_identical_occupancies():
    mdp = random_mdp(4, 2, rng=1)
    pop = LatentPolicy(np.tile(np.random.default_rng(0).normal(size=(1, 4, 2)), (3, 1, 1)))
    occs = policy_occupancies(mdp, pop)
    np.testing.assert_allclose(occs[0], occs[1])
    np.testing.assert_allclose(occs[0], occs[2])


def test_single_latent_matches_occupancy_measure():
    mdp = random_mdp(4, 2, rng=1)
    pop = LatentPolicy.init(1, 4, 2, rng=3)
    np.testing.assert_allclose(policy_occupancies(mdp, pop)[0],
                               occupancy_measure(mdp, pop.policy(0)))


def test_vertex_policies_land_near_vertices():
    logits = np.full((3, 3, 3), -30.0)
    for z in range(3):
        logits[z, :, z] = 30.0
    occs = policy_occupancies(make_three_state_mdp(), LatentPolicy(logits))
    for z in range(3):
        assert occs[z, z] == pytest.approx(0.9 + 0.1 / 3, abs=1e-9)


def test_average_occupancy():
    np.testing.assert_allclose(average_occupancy([[0.2, 0.8]], [1.0]), [0.2, 0.8])
    np.testing.assert_allclose(average_occupancy([[1, 0], [0, 1]], LatentPrior.uniform(2)),
                               [0.5, 0.5])
    np.testing.assert_allclose(
        average_occupancy([[1, 0, 0], [0, 1, 0]], [0.25, 0.75]), [0.25, 0.75, 0.0])
    with pytest.raises(ValueError):
        average_occupancy([[1, 0]], [0.5, 0.5])


def test_zero_reward_leaves_logits_unchanged():
    mdp = random_mdp(4, 3, rng=2)
    pop = LatentPolicy.init(2, 4, 3, rng=0)
    new = update_policy_exact(mdp, pop, 1, np.zeros(4), 0.1)
    np.testing.assert_array_equal(new.logits, pop.logits)


def test_rewarded_state_gains_occupancy():
    mdp = make_three_state_mdp()
    pop = LatentPolicy.init(2, 3, 3, rng=4)
    before = occupancy_measure(mdp, pop.policy(0))
    new = update_policy_exact(mdp, pop, 0, np.array([0.0, 0.0, 1.0]), 1e-2)
    after = occupancy_measure(mdp, new.policy(0))
    assert after[2] > before[2]


def test_update_touches_only_selected_slice():
    mdp = random_mdp(4, 3, rng=2)
    pop = LatentPolicy.init(3, 4, 3, rng=0)
    new = update_policy_exact(mdp, pop, 1, np.arange(4.0), 0.5)
    np.testing.assert_array_equal(new.logits[[0, 2]], pop.logits[[0, 2]])
    assert not np.array_equal(new.logits[1], pop.logits[1])


@pytest.mark.parametrize("seed", range(5))
def test_policy_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(4, 3, 0.9, rng)
    logits = rng.normal(size=(4, 3))
    reward = rng.normal(size=4)
    g = policy_gradient(mdp, logits, reward)
    fd = finite_difference(lambda th: policy_objective(mdp, th, reward), logits)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-4


def test_state_action_reward_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    mdp = random_mdp(3, 2, 0.8, rng)
    logits = rng.normal(size=(3, 2))
    reward = rng.normal(size=(3, 2))
    g = policy_gradient(mdp, logits, reward)
    fd = finite_difference(lambda th: policy_objective(mdp, th, reward), logits)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-4


def test_reinforce_estimate_is_unbiased():
    rng = np.random.default_rng(5)
    mdp = random_mdp(3, 2, 0.7, rng)
    logits = rng.normal(size=(3, 2))
    reward = rng.normal(size=3)
    exact = policy_gradient(mdp, logits, reward)
    batch = rollouts(mdp, softmax(logits), 60, 20_000, seed=1)
    est = np.zeros_like(exact)
    for i in range(batch.states.shape[0]):
        est += reinforce_gradient(mdp, logits, Trajectory(batch.states[i], batch.actions[i],
                                                          batch.next_states[i]), reward)
    est /= batch.states.shape[0]
    assert np.max(np.abs(est - exact)) < 0.01


def test_update_simplex_arithmetic():
    pop = SimplexPopulation(np.full((1, 3), 1 / 3))
    new = update_simplex(pop, 0, np.array([1.0, 0.0, 0.0]), 1.0)
    e = math.e
    np.testing.assert_allclose(new.points[0], [e / (e + 2), 1 / (e + 2), 1 / (e + 2)])
    np.testing.assert_allclose(new.points[0], [0.5761, 0.2119, 0.2119], atol=1e-4)


def test_update_simplex_zero_gradient_and_large_step():
    pop = SimplexPopulation.init(2, 3, rng=0)
    same = update_simplex(pop, 0, np.zeros(3), 0.7)
    np.testing.assert_allclose(same.points, pop.points, atol=1e-15)
    far = update_simplex(pop, 1, np.array([0.0, 1.0, 0.0]), 50.0)
    assert far.points[1, 1] > 1 - 1e-12
    np.testing.assert_array_equal(far.points[0], pop.points[0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_many_random_steps_keep_valid_distributions(seed):
    rng = np.random.default_rng(seed)
    spop = SimplexPopulation.init(3, 4, rng)
    for _ in range(1000):
        spop = update_simplex(spop, int(rng.integers(3)), rng.normal(size=4) * 3,
                              float(rng.uniform(0.01, 2.0)))
    assert np.all(spop.points >= 0)
    np.testing.assert_allclose(spop.points.sum(axis=1), 1.0, atol=1e-12)

    mdp = random_mdp(4, 2, 0.9, rng)
    lpop = LatentPolicy.init(3, 4, 2, rng)
    for _ in range(50):
        lpop = update_policy_exact(mdp, lpop, int(rng.integers(3)), rng.normal(size=4),
                                   float(rng.uniform(0.01, 1.0)))
    np.testing.assert_allclose(lpop.policies().sum(axis=-1), 1.0, atol=1e-12)


def test_initial_policies_are_near_identical():
    occs = policy_occupancies(make_three_state_mdp(), LatentPolicy.init(4, 3, 3, rng=0))
    assert np.max(np.abs(occs - occs.mean(axis=0))) < 0.1


def test_replay_buffer_fifo_and_capacity():
    buf = ReplayBuffer(capacity=5, n_latents=2)
    for i in range(7):
        buf.add(i % 3, 0, (i + 1) % 3, float(i), i % 2)
    assert len(buf) == 5
    s, a, s2, r, z = buf.tuples()
    np.testing.assert_array_equal(r, [2, 3, 4, 5, 6])
    np.testing.assert_array_equal(z, [0, 1, 0, 1, 0])
    with pytest.raises(ValueError):
        buf.add(0, 0, 0, 0.0, 2)


def test_replay_buffer_bulk_extend_larger_than_capacity():
    buf = ReplayBuffer(capacity=4, n_latents=1)
    buf.extend(np.arange(10), np.zeros(10), np.arange(10), np.arange(10.0), 0)
    np.testing.assert_array_equal(buf.tuples()[0], [6, 7, 8, 9])
    counts = buf.state_latent_counts(10)
    assert counts.sum() == 4 and counts[0, 6] == 1
