"""Policy-selection strategies and bandit algorithms.

Every selector breaks ties toward the lowest index and draws randomness only
from the generator it is handed, so a run is a pure function of its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diversity import DiversityTarget

SELECTORS = ("iteration", "uniform", "bandit-linucb", "bandit-ucb1", "bandit-egreedy")


@dataclass(frozen=True)
class SelectionContext:
    """Per-arm feature vectors, each rescaled to l2 norm at most 1."""

    features: np.ndarray

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        if x.ndim != 2:
            raise ValueError("features must have shape (n_arms, d)")
        norms = np.linalg.norm(x, axis=1)
        big = norms > 1.0
        x[big] /= norms[big, None]
        x.setflags(write=False)
        object.__setattr__(self, "features", x)

    @property
    def n_arms(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def occupancy_context(occs: np.ndarray, scores: np.ndarray | None = None) -> SelectionContext:
    """Contexts from occupancy vectors; with ``scores``, append ``d_i / ln N``."""
    occs = np.asarray(occs, dtype=float)
    if scores is None:
        return SelectionContext(occs)
    n = len(occs)
    scale = math.log(n) if n > 1 else 1.0
    x = np.column_stack([occs, np.asarray(scores) / scale])
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return SelectionContext(x / np.maximum(norms, 1.0))


def select_uniform(n_arms: int, rng: np.random.Generator) -> int:
    if n_arms < 1:
        raise ValueError("need at least one arm")
    return int(rng.integers(n_arms))


def select_iteration(scores: np.ndarray, target: DiversityTarget, frontier: int = 0) -> int:
    """Lowest index at or past ``frontier`` whose score is below the per-policy
    threshold; the last index once every such policy is satisfied."""
    scores = np.asarray(scores)
    for k in range(frontier, len(scores)):
        if scores[k] < target.per_policy_delta:
            return k
    return len(scores) - 1


@dataclass
class LinUcbState:
    """LinUCB ridge statistics.

    Disjoint by default: one ``(A_a, b_a)`` per arm. With ``shared=True`` a
    single regression is fitted on every arm's data (one ``theta*`` for all
    arms) and ``A``/``b`` hold one slice that every arm reads.
    """

    A: np.ndarray
    b: np.ndarray
    alpha: float = 1.0
    shared: bool = False
    n_arms: int = 0

    def __post_init__(self):
        if not self.n_arms:
            self.n_arms = self.A.shape[0]
        if self.shared and self.A.shape[0] != 1:
            raise ValueError("shared LinUCB keeps exactly one regression")

    @classmethod
    def fresh(cls, n_arms: int, dim: int, alpha: float = 1.0,
              shared: bool = False) -> "LinUcbState":
        k = 1 if shared else n_arms
        return cls(np.tile(np.eye(dim), (k, 1, 1)), np.zeros((k, dim)), alpha, shared, n_arms)

    def slot(self, arm: int) -> int:
        return 0 if self.shared else arm

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def theta(self) -> np.ndarray:
        return np.linalg.solve(self.A, self.b[..., None])[..., 0]


def linucb_scores(ctx: SelectionContext, st: LinUcbState) -> np.ndarray:
    x = ctx.features
    if x.shape != (st.n_arms, st.dim):
        raise ValueError(f"context shape {x.shape} does not match state {(st.n_arms, st.dim)}")
    A = np.broadcast_to(st.A, (st.n_arms, st.dim, st.dim))
    A_inv_x = np.linalg.solve(A, x[..., None])[..., 0]
    width = np.einsum("ad,ad->a", x, A_inv_x)
    assert np.all(width >= -1e-12), "design matrix lost positive definiteness"
    mean = np.einsum("ad,ad->a", x, np.broadcast_to(st.theta(), x.shape))
    return mean + st.alpha * np.sqrt(np.maximum(width, 0.0))


def linucb_select(ctx: SelectionContext, st: LinUcbState) -> int:
    """``argmax_a x_a . theta_a + alpha sqrt(x_a A_a^{-1} x_a)``."""
    return int(np.argmax(linucb_scores(ctx, st)))


def linucb_update(st: LinUcbState, arm: int, x: np.ndarray, r: float) -> LinUcbState:
    """Rank-one update of arm ``arm``; returns a new state."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"reward {r} outside [0, 1]")
    if not 0 <= arm < st.n_arms:
        raise IndexError(f"arm {arm} out of range")
    x = np.asarray(x, dtype=float)
    A, b = st.A.copy(), st.b.copy()
    k = st.slot(arm)
    A[k] += np.outer(x, x)
    b[k] += r * x
    return LinUcbState(A, b, st.alpha, st.shared, st.n_arms)


def ucb1_select(counts: np.ndarray, means: np.ndarray, t: int) -> int:
    """UCB1; any unpulled arm goes first."""
    if t < 1:
        raise ValueError("t must be >= 1")
    counts = np.asarray(counts)
    unpulled = np.flatnonzero(counts == 0)
    if len(unpulled):
        return int(unpulled[0])
    return int(np.argmax(np.asarray(means) + np.sqrt(2.0 * math.log(t) / counts)))


def epsilon_greedy_select(counts: np.ndarray, means: np.ndarray, t: int, epsilon: float,
                          rng: np.random.Generator) -> int:
    if t < 1:
        raise ValueError("t must be >= 1")
    if rng.random() < epsilon:
        return int(rng.integers(len(means)))
    return int(np.argmax(means))


@dataclass
class RegretLedger:
    chosen_rewards: list = field(default_factory=list)
    optimal_rewards: list = field(default_factory=list)

    def record(self, chosen: float, optimal: float) -> None:
        self.chosen_rewards.append(float(chosen))
        self.optimal_rewards.append(float(optimal))

    def curve(self) -> np.ndarray:
        return np.cumsum(np.subtract(self.optimal_rewards, self.chosen_rewards))


def regret(ledger: RegretLedger) -> float:
    """``R_T = sum optimal - sum chosen``."""
    if len(ledger.chosen_rewards) != len(ledger.optimal_rewards):
        raise ValueError("ledger lengths differ")
    return float(np.sum(ledger.optimal_rewards) - np.sum(ledger.chosen_rewards))


class Selector:
    """Stateful wrapper shared by the trainer and the bandit bench."""

    needs_context = False

    def select(self, ctx: SelectionContext, scores: np.ndarray | None,
               rng: np.random.Generator) -> int:
        raise NotImplementedError

    def update(self, arm: int, x: np.ndarray, reward: float) -> None:
        pass


class UniformSelector(Selector):
    def __init__(self, n_arms: int):
        self.n_arms = n_arms

    def select(self, ctx, scores, rng):
        return select_uniform(self.n_arms, rng)


class IterationSelector(Selector):
    """Advances a frontier; policies behind it are frozen for good."""

    def __init__(self, target: DiversityTarget):
        self.target = target
        self.frontier = 0

    def select(self, ctx, scores, rng):
        k = select_iteration(scores, self.target, self.frontier)
        self.frontier = k
        return k


class LinUCBSelector(Selector):
    needs_context = True

    def __init__(self, n_arms: int, dim: int, alpha: float = 1.0, shared: bool = False):
        self.state = LinUcbState.fresh(n_arms, dim, alpha, shared)

    def select(self, ctx, scores, rng):
        return linucb_select(ctx, self.state)

    def update(self, arm, x, reward):
        self.state = linucb_update(self.state, arm, x, reward)


class _CountingSelector(Selector):
    def __init__(self, n_arms: int):
        self.counts = np.zeros(n_arms, dtype=np.int64)
        self.sums = np.zeros(n_arms)
        self.t = 0

    @property
    def means(self) -> np.ndarray:
        return np.divide(self.sums, self.counts, out=np.zeros_like(self.sums),
                         where=self.counts > 0)

    def update(self, arm, x, reward):
        self.counts[arm] += 1
        self.sums[arm] += reward


class UCB1Selector(_CountingSelector):
    def select(self, ctx, scores, rng):
        self.t += 1
        return ucb1_select(self.counts, self.means, self.t)


class EpsilonGreedySelector(_CountingSelector):
    def __init__(self, n_arms: int, epsilon: float = 0.1):
        super().__init__(n_arms)
        self.epsilon = epsilon

    def select(self, ctx, scores, rng):
        self.t += 1
        return epsilon_greedy_select(self.counts, self.means, self.t, self.epsilon, rng)


def make_selector(key: str, n_arms: int, dim: int, target: DiversityTarget | None = None,
                  alpha: float = 1.0, epsilon: float = 0.1, shared: bool = False) -> Selector:
    if key == "uniform":
        return UniformSelector(n_arms)
    if key == "iteration":
        if target is None:
            raise ValueError("iteration selector needs a diversity target")
        return IterationSelector(target)
    if key == "bandit-linucb":
        return LinUCBSelector(n_arms, dim, alpha, shared)
    if key == "bandit-ucb1":
        return UCB1Selector(n_arms)
    if key == "bandit-egreedy":
        return EpsilonGreedySelector(n_arms, epsilon)
    raise ValueError(f"unknown selector {key!r}; expected one of {SELECTORS}")
