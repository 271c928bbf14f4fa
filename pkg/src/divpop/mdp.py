"""Finite MDPs and exact discounted state-occupancy measures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-9


class MDPError(ValueError):
    """Raised for malformed MDPs or policies."""


@dataclass(frozen=True)
class FiniteMDP:
    """Tabular MDP ``(S, A, P, r, gamma)``.

    ``transition[s, a, s']`` is the probability of moving to ``s'``. The
    extrinsic ``reward`` table is kept for completeness; training never reads
    it.
    """

    transition: np.ndarray
    initial_dist: np.ndarray
    gamma: float = 0.9
    reward: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        mu0 = np.array(self.initial_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise MDPError(f"transition must have shape (S, A, S), got {P.shape}")
        if mu0.shape != (P.shape[0],):
            raise MDPError(
                f"initial_dist must have length {P.shape[0]}, got shape {mu0.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > PROB_TOL):
            raise MDPError("every transition row must be a probability distribution")
        if np.any(mu0 < 0) or abs(mu0.sum() - 1.0) > PROB_TOL:
            raise MDPError("initial_dist must be a probability distribution")
        if not 0.0 <= self.gamma < 1.0:
            raise MDPError(f"gamma must lie in [0, 1), got {self.gamma}")
        P.setflags(write=False)
        mu0.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial_dist", mu0)
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.reward is not None:
            r = np.array(self.reward, dtype=float)
            if r.shape != P.shape[:2]:
                raise MDPError(f"reward must have shape {P.shape[:2]}, got {r.shape}")
            r.setflags(write=False)
            object.__setattr__(self, "reward", r)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_gamma(self, gamma: float) -> "FiniteMDP":
        return FiniteMDP(self.transition, self.initial_dist, gamma, self.reward)


def make_three_state_mdp(gamma: float = 0.9) -> FiniteMDP:
    """Three states, three actions; action ``k`` jumps to state ``k`` from anywhere.

    Every point of the probability triangle is (approximately, as gamma -> 1)
    reachable as an occupancy measure.
    """
    P = np.zeros((3, 3, 3))
    for a in range(3):
        P[:, a, a] = 1.0
    return FiniteMDP(P, np.full(3, 1.0 / 3.0), gamma)


def random_mdp(n_states: int, n_actions: int, gamma: float = 0.9,
               rng: np.random.Generator | int | None = None) -> FiniteMDP:
    """Dense random MDP with Dirichlet(1) transition rows and initial state."""
    rng = np.random.default_rng(rng)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    mu0 = rng.dirichlet(np.ones(n_states))
    return FiniteMDP(P, mu0, gamma)


def check_policy(mdp: FiniteMDP, policy: np.ndarray) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise MDPError(
            f"policy must have shape {(mdp.n_states, mdp.n_actions)}, got {pi.shape}")
    if np.any(pi < 0):
        raise MDPError("policy has negative entries")
    sums = pi.sum(axis=1)
    if np.any(sums == 0):
        bad = int(np.flatnonzero(sums == 0)[0])
        raise MDPError(f"policy row for state {bad} is all zero")
    if np.any(np.abs(sums - 1.0) > PROB_TOL):
        raise MDPError("policy rows must sum to 1")
    return pi


def state_transition_matrix(mdp: FiniteMDP, policy: np.ndarray) -> np.ndarray:
    """``P_pi[s, s'] = sum_a pi(a|s) P(s, a, s')``."""
    return np.einsum("sa,sap->sp", policy, mdp.transition)


def occupancy_measure(mdp: FiniteMDP, policy: np.ndarray) -> np.ndarray:
    """Discounted state occupancy ``(1 - gamma) sum_t gamma^t P_t(s)``.

    Solves ``(I - gamma P_pi^T) rho = (1 - gamma) mu0`` directly.
    """
    if not mdp.gamma < 1.0:
        raise MDPError("occupancy measure requires gamma < 1")
    pi = check_policy(mdp, policy)
    P_pi = state_transition_matrix(mdp, pi)
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi.T
    rho = np.linalg.solve(A, (1.0 - mdp.gamma) * mdp.initial_dist)
    # round-off can leave tiny negatives; the exact solution is nonnegative
    rho = np.clip(rho, 0.0, None)
    return rho / rho.sum()


def fixed_point_residual(mdp: FiniteMDP, policy: np.ndarray, rho: np.ndarray) -> float:
    P_pi = state_transition_matrix(mdp, policy)
    resid = rho - (1.0 - mdp.gamma) * mdp.initial_dist - mdp.gamma * P_pi.T @ rho
    return float(np.max(np.abs(resid)))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __len__(self):
        return len(self.states)


def _cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    return cdf / cdf[..., -1:]


def _draw(rng: np.random.Generator, cdf: np.ndarray) -> np.ndarray:
    """One inverse-CDF draw per row of a normalized ``cdf``."""
    u = rng.random(cdf.shape[:-1] + (1,))
    idx = (u >= cdf).sum(axis=-1)
    return np.minimum(idx, cdf.shape[-1] - 1)


def _sample_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    return _draw(rng, _cdf(probs))


def rollout(mdp: FiniteMDP, policy: np.ndarray, horizon: int, seed: int) -> Trajectory:
    """Sample one trajectory of ``horizon`` transitions. Same seed, same trajectory."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    batch = rollouts(mdp, policy, horizon, 1, seed)
    return Trajectory(batch.states[0], batch.actions[0], batch.next_states[0])


def rollouts(mdp: FiniteMDP, policy: np.ndarray, horizon: int, n: int,
             seed: int | np.random.Generator) -> Trajectory:
    """``n`` independent trajectories simulated in lockstep; arrays are ``(n, horizon)``."""
    pi = check_policy(mdp, policy)
    rng = np.random.default_rng(seed)
    states = np.empty((n, horizon), dtype=np.int64)
    actions = np.empty((n, horizon), dtype=np.int64)
    next_states = np.empty((n, horizon), dtype=np.int64)
    s = _sample_rows(rng, np.broadcast_to(mdp.initial_dist, (n, mdp.n_states)))
    pi_cdf = _cdf(pi)
    p_cdf = _cdf(mdp.transition)
    for t in range(horizon):
        a = _draw(rng, pi_cdf[s])
        s_next = _draw(rng, p_cdf[s, a])
        states[:, t], actions[:, t], next_states[:, t] = s, a, s_next
        s = s_next
    return Trajectory(states, actions, next_states)


def discounted_visit_frequencies(traj: Trajectory, n_states: int, gamma: float) -> np.ndarray:
    """Monte Carlo occupancy estimate: visits weighted by ``gamma^t``, normalized."""
    states = np.atleast_2d(traj.states)
    weights = gamma ** np.arange(states.shape[1])
    freq = np.zeros(n_states)
    for t in range(states.shape[1]):
        freq += weights[t] * np.bincount(states[:, t], minlength=n_states)
    return freq / freq.sum()


def monte_carlo_occupancy(mdp: FiniteMDP, policy: np.ndarray, n: int,
                          seed: int | np.random.Generator) -> np.ndarray:
    """Occupancy estimate from ``n`` rollouts that stop with probability
    ``1 - gamma`` before every step.

    A trajectory is alive at step ``t`` with probability ``gamma^t``, so plain
    visit counts carry the discount weights without truncating the horizon.
    """
    pi = check_policy(mdp, policy)
    rng = np.random.default_rng(seed)
    pi_cdf, p_cdf = _cdf(pi), _cdf(mdp.transition)
    s = _sample_rows(rng, np.broadcast_to(mdp.initial_dist, (n, mdp.n_states)))
    counts = np.zeros(mdp.n_states)
    while len(s):
        counts += np.bincount(s, minlength=mdp.n_states)
        s = s[rng.random(len(s)) < mdp.gamma]
        a = _draw(rng, pi_cdf[s])
        s = _draw(rng, p_cdf[s, a])
    return counts / counts.sum()
