"""Intrinsic reward calculators plugged into the training loop."""

from __future__ import annotations

import numpy as np

from .diversity import KL_FLOOR, prior_probs, kl_divergence, smooth
from .population import ReplayBuffer

REWARD_MODES = ("diayn-exact", "diayn-empirical", "dgpo", "behavior")


def posterior(occs: np.ndarray, prior=None) -> np.ndarray:
    """Exact Bayes posterior ``q(z | s)`` as an ``(N, S)`` array.

    Columns for states no policy visits are left at the prior.
    """
    occs = np.asarray(occs, dtype=float)
    p = prior_probs(prior, len(occs))
    joint = p[:, None] * occs
    marg = joint.sum(axis=0)
    q = np.tile(p[:, None], (1, occs.shape[1]))
    seen = marg > 0
    q[:, seen] = joint[:, seen] / marg[seen]
    return q


def diayn_reward(occs: np.ndarray, prior, z: int) -> np.ndarray:
    """``r(s) = ln q(z|s) - ln p(z)`` under the exact posterior.

    This is also ``ln(rho(s|z) / rho(s))``, the derivative of ``I(s; z)`` with
    respect to ``rho(s|z)`` divided by ``p(z)``.
    """
    occs = np.asarray(occs, dtype=float)
    if not 0 <= z < len(occs):
        raise IndexError(f"latent index {z} out of range")
    p = prior_probs(prior, len(occs))
    q = posterior(occs, p)
    r = np.log(np.maximum(q[z], KL_FLOOR)) - np.log(p[z])
    r[occs.sum(axis=0) == 0] = 0.0
    return r


def diayn_reward_empirical(buffer: ReplayBuffer, prior, z: int, n_states: int) -> np.ndarray:
    """Same reward with ``q(z|s)`` estimated from add-one-smoothed visit counts."""
    if len(buffer) == 0:
        raise ValueError("replay buffer is empty")
    n = buffer.n_latents
    p = prior_probs(prior, n)
    counts = buffer.state_latent_counts(n_states)
    q = (counts[z] + 1.0) / (counts.sum(axis=0) + n)
    return np.log(q) - np.log(p[z])


def nearest_by_kl(occs: np.ndarray, z: int) -> int:
    """``argmin_{j != z} KL(rho_z || rho_j)``, lowest index on ties."""
    occs = np.asarray(occs, dtype=float)
    if len(occs) < 2:
        raise ValueError("need at least two policies")
    best, best_val = -1, np.inf
    for j in range(len(occs)):
        if j == z:
            continue
        v = kl_divergence(occs[z], occs[j])
        if v < best_val:
            best, best_val = j, v
    return best


def dgpo_objective(occs: np.ndarray, z: int) -> float:
    occs = np.asarray(occs, dtype=float)
    return min(kl_divergence(occs[z], occs[j]) for j in range(len(occs)) if j != z)


def dgpo_objective_gradient(occs: np.ndarray, z: int) -> np.ndarray:
    """Gradient of ``min_{j != z} KL(rho_z || rho_j)`` with respect to ``rho_z``."""
    occs = np.asarray(occs, dtype=float)
    j = nearest_by_kl(occs, z)
    p = np.maximum(occs[z], KL_FLOOR)
    return np.log(p / smooth(occs[j])) + 1.0


def behavior_divergence(pi_a: np.ndarray, pi_b: np.ndarray, occ: np.ndarray) -> float:
    """``sum_s occ(s) KL(pi_a(.|s) || pi_b(.|s))``."""
    pi_a = np.asarray(pi_a, dtype=float)
    pi_b = np.asarray(pi_b, dtype=float)
    occ = np.asarray(occ, dtype=float)
    if pi_a.shape != pi_b.shape or pi_a.ndim != 2 or occ.shape != pi_a.shape[:1]:
        raise ValueError(f"shape mismatch: {pi_a.shape}, {pi_b.shape}, {occ.shape}")
    return float(sum(occ[s] * kl_divergence(pi_a[s], pi_b[s])
                     for s in range(len(occ)) if occ[s] > 0))


def behavior_reward(policies: np.ndarray, occs: np.ndarray, z: int) -> np.ndarray:
    """State-action reward ``ln pi_z(a|s) - ln pi_j(a|s)`` against the behaviorally
    closest policy ``j``; its expectation under ``pi_z`` and ``rho_z`` is the
    behavior divergence."""
    policies = np.asarray(policies, dtype=float)
    divs = [np.inf if j == z else behavior_divergence(policies[z], policies[j], occs[z])
            for j in range(len(policies))]
    j = int(np.argmin(divs))
    return (np.log(np.maximum(policies[z], KL_FLOOR))
            - np.log(smooth(policies[j])))
