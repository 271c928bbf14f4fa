"""Latent-conditioned policy populations and their update rules.

Two representations are supported. :class:`LatentPolicy` holds softmax
logits ``theta[z, s, a]`` and is trained with exact policy gradients through
the occupancy linear system. :class:`SimplexPopulation` identifies each policy
with its occupancy point and moves it by exponentiated-gradient steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import FiniteMDP, Trajectory, occupancy_measure, state_transition_matrix

INIT_STD = 0.1


class NumericalError(ArithmeticError):
    """An update produced non-finite values."""


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class LatentPrior:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("latent prior must be a probability vector")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n: int) -> "LatentPrior":
        return cls(np.full(n, 1.0 / n))

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True)
class LatentPolicy:
    """Tabular softmax policy ``pi(a | s, z)`` with logits indexed ``(z, s, a)``."""

    logits: np.ndarray

    def __post_init__(self):
        lg = np.array(self.logits, dtype=float)
        if lg.ndim != 3:
            raise ValueError(f"logits must have shape (N, S, A), got {lg.shape}")
        lg.setflags(write=False)
        object.__setattr__(self, "logits", lg)

    @classmethod
    def init(cls, n_latents: int, n_states: int, n_actions: int,
             rng: np.random.Generator | int | None = None, std: float = INIT_STD):
        rng = np.random.default_rng(rng)
        return cls(std * rng.standard_normal((n_latents, n_states, n_actions)))

    @property
    def n_latents(self) -> int:
        return self.logits.shape[0]

    def policy(self, z: int) -> np.ndarray:
        return softmax(self.logits[z])

    def policies(self) -> np.ndarray:
        return softmax(self.logits)

    def with_slice(self, z: int, logits_z: np.ndarray) -> "LatentPolicy":
        lg = self.logits.copy()
        lg[z] = logits_z
        return LatentPolicy(lg)


@dataclass(frozen=True)
class SimplexPopulation:
    """``N`` policies represented directly by their state distributions."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must have shape (N, S)")
        if np.any(pts < 0) or np.any(np.abs(pts.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("every point must be a probability vector")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def init(cls, n_policies: int, n_states: int,
             rng: np.random.Generator | int | None = None, std: float = INIT_STD):
        """Points scattered slightly around the centroid."""
        rng = np.random.default_rng(rng)
        return cls(softmax(std * rng.standard_normal((n_policies, n_states))))

    @property
    def n_latents(self) -> int:
        return self.points.shape[0]


def policy_occupancies(mdp: FiniteMDP, pop: LatentPolicy) -> np.ndarray:
    """Occupancy ``rho(s | z_i)`` for every latent, stacked as ``(N, S)``."""
    pis = pop.policies()
    return np.stack([occupancy_measure(mdp, pis[z]) for z in range(pop.n_latents)])


def average_occupancy(occs: np.ndarray, prior: LatentPrior | np.ndarray) -> np.ndarray:
    occs = np.asarray(occs, dtype=float)
    p = prior.probs if isinstance(prior, LatentPrior) else np.asarray(prior, dtype=float)
    if len(p) != len(occs):
        raise ValueError(f"{len(occs)} occupancies but prior has {len(p)} entries")
    return p @ occs


def _as_state_action_reward(reward: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    r = np.asarray(reward, dtype=float)
    if r.shape == (n_states,):
        return np.repeat(r[:, None], n_actions, axis=1)
    if r.shape == (n_states, n_actions):
        return r
    raise ValueError(f"reward must have shape ({n_states},) or ({n_states}, {n_actions})")


def policy_objective(mdp: FiniteMDP, logits_z: np.ndarray, reward: np.ndarray) -> float:
    """``J = sum_s rho(s) sum_a pi(a|s) r(s, a)`` for one latent's logits."""
    pi = softmax(logits_z)
    r = _as_state_action_reward(reward, mdp.n_states, mdp.n_actions)
    rho = occupancy_measure(mdp, pi)
    return float(rho @ (pi * r).sum(axis=1))


def policy_gradient(mdp: FiniteMDP, logits_z: np.ndarray, reward: np.ndarray) -> np.ndarray:
    """Exact gradient of :func:`policy_objective` with respect to ``logits_z``.

    With ``V = (I - gamma P_pi)^{-1} r_pi`` and ``Q = r + gamma P V``, the
    objective is ``(1 - gamma) mu0 . V`` and its logit gradient is
    ``rho(s) pi(a|s) (Q(s, a) - V(s))``.
    """
    pi = softmax(logits_z)
    r = _as_state_action_reward(reward, mdp.n_states, mdp.n_actions)
    P_pi = state_transition_matrix(mdp, pi)
    r_pi = (pi * r).sum(axis=1)
    V = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)
    Q = r + mdp.gamma * mdp.transition @ V
    rho = occupancy_measure(mdp, pi)
    return rho[:, None] * pi * (Q - V[:, None])


def update_policy_exact(mdp: FiniteMDP, pop: LatentPolicy, z: int, reward: np.ndarray,
                        step_size: float) -> LatentPolicy:
    """One exact gradient-ascent step on the intrinsic return of latent ``z``."""
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    grad = policy_gradient(mdp, pop.logits[z], reward)
    if not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite policy gradient for latent {z}")
    return pop.with_slice(z, pop.logits[z] + step_size * grad)


def reinforce_gradient(mdp: FiniteMDP, logits_z: np.ndarray, traj: Trajectory,
                       reward: np.ndarray) -> np.ndarray:
    """Single-trajectory score-function estimate of :func:`policy_gradient`.

    The reward of a step is credited when its state is visited, matching the
    state-based occupancy objective.
    """
    pi = softmax(logits_z)
    r = _as_state_action_reward(reward, mdp.n_states, mdp.n_actions)
    s, a = np.asarray(traj.states), np.asarray(traj.actions)
    g = mdp.gamma
    rewards = r[s, a]
    # return-to-go from each step, discounted back to time 0
    disc = g ** np.arange(len(s))
    togo = np.cumsum((disc * rewards)[::-1])[::-1]
    grad = np.zeros_like(pi)
    for t in range(len(s)):
        score = -pi[s[t]]
        score[a[t]] += 1.0
        grad[s[t]] += togo[t] * score
    return (1.0 - g) * grad


def update_policy_sampled(mdp: FiniteMDP, pop: LatentPolicy, z: int, traj: Trajectory,
                          reward: np.ndarray, step_size: float) -> LatentPolicy:
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    grad = reinforce_gradient(mdp, pop.logits[z], traj, reward)
    if not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite sampled gradient for latent {z}")
    return pop.with_slice(z, pop.logits[z] + step_size * grad)


def update_simplex(pop: SimplexPopulation, z: int, gradient: np.ndarray,
                   step_size: float) -> SimplexPopulation:
    """Exponentiated-gradient step ``rho <- normalize(rho * exp(step * grad))`` on point ``z``."""
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    grad = np.asarray(gradient, dtype=float)
    # shifting the exponent leaves the normalized result unchanged
    w = np.log(np.maximum(pop.points[z], 1e-300)) + step_size * (grad - grad.max())
    pts = pop.points.copy()
    pts[z] = softmax(w)
    if not np.all(np.isfinite(pts[z])):
        raise NumericalError(f"non-finite simplex point for latent {z}")
    return SimplexPopulation(pts)


class ReplayBuffer:
    """FIFO buffer of ``(s, a, s', r_in, z)`` tuples with fixed capacity."""

    def __init__(self, capacity: int, n_latents: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.n_latents = n_latents
        self._ints = np.zeros((capacity, 4), dtype=np.int64)  # s, a, s', z
        self._r = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, s: int, a: int, s_next: int, r_in: float, z: int) -> None:
        self.extend([s], [a], [s_next], [r_in], z)

    def extend(self, states, actions, next_states, rewards, z) -> None:
        """Append many tuples; ``z`` may be a scalar or per-tuple array."""
        states = np.asarray(states, dtype=np.int64).ravel()
        n = len(states)
        zs = np.broadcast_to(np.asarray(z, dtype=np.int64), (n,))
        if np.any(zs < 0) or np.any(zs >= self.n_latents):
            raise ValueError(f"latent index out of range [0, {self.n_latents})")
        rows = np.column_stack([
            states,
            np.asarray(actions, dtype=np.int64).ravel(),
            np.asarray(next_states, dtype=np.int64).ravel(),
            zs,
        ])
        rs = np.broadcast_to(np.asarray(rewards, dtype=float).ravel(), (n,))
        if n >= self.capacity:
            rows, rs, n = rows[-self.capacity:], rs[-self.capacity:], self.capacity
        idx = (self._next + np.arange(n)) % self.capacity
        self._ints[idx] = rows
        self._r[idx] = rs
        self._next = (self._next + n) % self.capacity
        self._size = min(self._size + n, self.capacity)

    def add_trajectory(self, traj: Trajectory, z: int, reward: np.ndarray | None = None):
        s = np.asarray(traj.states).ravel()
        r = np.zeros(len(s)) if reward is None else np.asarray(reward)[s]
        self.extend(s, np.asarray(traj.actions).ravel(), np.asarray(traj.next_states).ravel(), r, z)

    def tuples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Stored tuples oldest first as ``(s, a, s', r_in, z)`` arrays."""
        if self._size < self.capacity:
            order = np.arange(self._size)
        else:
            order = (self._next + np.arange(self.capacity)) % self.capacity
        ints, r = self._ints[order], self._r[order]
        return ints[:, 0], ints[:, 1], ints[:, 2], r, ints[:, 3]

    def state_latent_counts(self, n_states: int) -> np.ndarray:
        s, _, _, _, z = self.tuples()
        counts = np.zeros((self.n_latents, n_states))
        np.add.at(counts, (z, s), 1.0)
        return counts
