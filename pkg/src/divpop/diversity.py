"""Pairwise diversity, population objectives and the delta-target test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .population import LatentPrior, average_occupancy

KL_FLOOR = 1e-12


def prior_probs(prior, n: int) -> np.ndarray:
    if prior is None:
        return np.full(n, 1.0 / n)
    p = prior.probs if isinstance(prior, LatentPrior) else np.asarray(prior, dtype=float)
    if len(p) != n:
        raise ValueError(f"{n} occupancies but prior has {len(p)} entries")
    return p


def smooth(q: np.ndarray, floor: float = KL_FLOOR) -> np.ndarray:
    """Floor entries at ``floor`` and renormalize."""
    q = np.maximum(np.asarray(q, dtype=float), floor)
    return q / q.sum(axis=-1, keepdims=True)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """``KL(p || q)`` in nats with ``0 ln 0 = 0``; ``q`` is smoothed first."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    q = smooth(q)
    mask = p > 0
    return float(max(np.sum(p[mask] * np.log(p[mask] / q[mask])), 0.0))


@dataclass(frozen=True)
class DiversityMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("diversity matrix must be square")
        np.fill_diagonal(v, 0.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DiversityTarget:
    """Threshold ``delta`` on the population objective, plus a per-policy threshold."""

    delta: float
    per_policy_delta: float | None = None

    def __post_init__(self):
        if self.per_policy_delta is None:
            object.__setattr__(self, "per_policy_delta", self.delta)
        if self.delta < 0 or self.per_policy_delta <= 0:
            raise ValueError("diversity thresholds must be positive")


def build_diversity_matrix(occs: np.ndarray) -> DiversityMatrix:
    """``U[i, j] = KL(rho_i || rho_j)``, zero diagonal."""
    P = np.asarray(occs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_entropy = np.where(P > 0, P * np.log(P), 0.0).sum(axis=1)
    cross = P @ np.log(smooth(P)).T
    U = np.maximum(neg_entropy[:, None] - cross, 0.0)
    return DiversityMatrix(U)


def f_sum(U: DiversityMatrix | np.ndarray) -> float:
    """Sum of the off-diagonal entries."""
    v = U.values if isinstance(U, DiversityMatrix) else np.asarray(U, dtype=float)
    return float(v.sum() - np.trace(v))


def per_policy_scores(occs: np.ndarray, prior=None) -> np.ndarray:
    """``d_i = KL(rho(s|z_i) || rho(s))`` for every latent.

    No smoothing is needed: wherever ``rho_i(s) > 0`` the mixture is at least
    ``p(z_i) rho_i(s)``.
    """
    occs = np.asarray(occs, dtype=float)
    p = prior_probs(prior, len(occs))
    avg = average_occupancy(occs, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(occs > 0, occs * np.log(occs / avg), 0.0)
    return np.maximum(terms.sum(axis=1), 0.0)


def per_policy_score(occs: np.ndarray, prior, z: int) -> float:
    occs = np.asarray(occs)
    if not 0 <= z < len(occs):
        raise IndexError(f"latent index {z} out of range for {len(occs)} policies")
    return float(per_policy_scores(occs, prior)[z])


def mutual_information(occs: np.ndarray, prior=None) -> float:
    """``I(s; z) = E_{p(z)} KL(rho(s|z) || rho(s))``."""
    occs = np.asarray(occs, dtype=float)
    p = prior_probs(prior, len(occs))
    return float(p @ per_policy_scores(occs, p))


def population_objective(occs: np.ndarray, prior=None, objective: str = "mi") -> float:
    if objective == "mi":
        return mutual_information(occs, prior)
    if objective == "f_sum":
        return f_sum(build_diversity_matrix(occs))
    raise ValueError(f"unknown diversity objective {objective!r}")


def target_reached(value, target: DiversityTarget, mode: str = "population") -> bool:
    """Population mode: ``value > delta`` (strict). Per-policy mode: every score
    in ``value`` is at least ``per_policy_delta``."""
    if mode == "population":
        if isinstance(value, DiversityMatrix):
            value = f_sum(value)
        return bool(float(value) > target.delta)
    if mode == "per-policy":
        return bool(np.all(np.asarray(value) >= target.per_policy_delta))
    raise ValueError(f"unknown target mode {mode!r}")


def _exact(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def bound_iterations(f0: float, delta: float, nu: float, epsilon: float) -> int:
    """Smallest ``M >= 0`` with ``f0 + M * nu * epsilon > delta``."""
    if nu <= 0 or epsilon <= 0:
        raise ValueError("nu and epsilon must be positive")
    if f0 > delta:
        return 0
    # exact decimal arithmetic on the shortest repr, so 10 * 0.1 == 1 is not > 1
    f0_, delta_ = _exact(f0), _exact(delta)
    rate = _exact(nu) * _exact(epsilon)
    m = math.floor((delta_ - f0_) / rate) + 1
    return max(int(m), 0)
