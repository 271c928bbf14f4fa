"""The unified diversity training loop and the selection ablation harness."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import diversity as dv
from . import rewards as rw
from .mdp import FiniteMDP, make_three_state_mdp, rollout
from .population import (LatentPolicy, LatentPrior, ReplayBuffer, SimplexPopulation,
                         policy_occupancies, update_policy_exact, update_policy_sampled,
                         update_simplex)
from .selection import SELECTORS, RegretLedger, Selector, make_selector, occupancy_context

log = logging.getLogger(__name__)

MODES = ("simplex", "logits")
OBJECTIVES = ("mi", "f_sum")
BANDIT_REWARDS = ("binary-unmet", "delta-f")
CONTEXTS = ("occupancy", "extended")
DEFAULT_STEP = {"simplex": 0.5, "logits": 0.1}


@dataclass(frozen=True)
class TrainConfig:
    mdp: FiniteMDP = field(default_factory=make_three_state_mdp)
    n_policies: int = 3
    mode: str = "simplex"
    selector: str = "uniform"
    alpha: float = 1.0
    epsilon: float = 0.1
    context: str = "occupancy"
    shared: bool = False
    reward: str = "diayn-exact"
    objective: str = "mi"
    bandit_reward: str = "binary-unmet"
    delta: float = 0.8
    per_policy_delta: float | None = None
    max_iterations: int = 500
    step_size: float | None = None
    seed: int = 0
    update: str = "exact"
    horizon: int = 64
    buffer_capacity: int = 10_000
    stop_at_target: bool = True

    def __post_init__(self):
        if self.n_policies < 2:
            raise ValueError("n_policies must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        for name, value, allowed in [("mode", self.mode, MODES),
                                     ("selector", self.selector, SELECTORS),
                                     ("reward", self.reward, rw.REWARD_MODES),
                                     ("objective", self.objective, OBJECTIVES),
                                     ("bandit_reward", self.bandit_reward, BANDIT_REWARDS),
                                     ("context", self.context, CONTEXTS),
                                     ("update", self.update, ("exact", "sampled"))]:
            if value not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {value!r}")
        if self.mode == "simplex" and (self.reward == "behavior" or self.update == "sampled"):
            raise ValueError("simplex mode has no actions; use logits mode for "
                             "behavior rewards or sampled updates")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")

    @property
    def lr(self) -> float:
        return self.step_size if self.step_size is not None else DEFAULT_STEP[self.mode]

    @property
    def target(self) -> dv.DiversityTarget:
        ppd = self.per_policy_delta if self.per_policy_delta is not None else self.delta
        # a zero delta still needs a positive per-policy threshold
        return dv.DiversityTarget(self.delta, ppd if ppd > 0 else 1e-12)


@dataclass(frozen=True)
class TrainingRecord:
    iteration: int
    selected_z: int
    bandit_reward: float
    mi: float
    f_sum: float
    scores: tuple
    target_reached: bool
    occupancies: np.ndarray = field(repr=False, compare=False)


@dataclass
class TrainState:
    population: LatentPolicy | SimplexPopulation
    prior: LatentPrior
    occs: np.ndarray
    scores: np.ndarray
    objective: float
    selector: Selector
    rng: np.random.Generator
    ledger: RegretLedger = field(default_factory=RegretLedger)
    buffer: ReplayBuffer | None = None
    iteration: int = 0


def occupancies(config: TrainConfig, pop) -> np.ndarray:
    if isinstance(pop, SimplexPopulation):
        return np.array(pop.points)
    return policy_occupancies(config.mdp, pop)


def _measure(config: TrainConfig, occs: np.ndarray, prior: LatentPrior):
    scores = dv.per_policy_scores(occs, prior)
    return scores, dv.population_objective(occs, prior, config.objective)


def init_state(config: TrainConfig) -> TrainState:
    init_seq, sel_seq = np.random.SeedSequence(config.seed).spawn(2)
    init_rng = np.random.default_rng(init_seq)
    n, S = config.n_policies, config.mdp.n_states
    if config.mode == "simplex":
        pop = SimplexPopulation.init(n, S, init_rng)
    else:
        pop = LatentPolicy.init(n, S, config.mdp.n_actions, init_rng)
    prior = LatentPrior.uniform(n)
    occs = occupancies(config, pop)
    scores, obj = _measure(config, occs, prior)
    dim = S + (1 if config.context == "extended" else 0)
    selector = make_selector(config.selector, n, dim, config.target,
                             alpha=config.alpha, epsilon=config.epsilon, shared=config.shared)
    state = TrainState(pop, prior, occs, scores, obj, selector, np.random.default_rng(sel_seq))
    if config.reward == "diayn-empirical" or config.update == "sampled":
        state.buffer = ReplayBuffer(config.buffer_capacity, n)
        for z in range(n):
            _collect(config, state, z)
    return state


def _collect(config: TrainConfig, state: TrainState, z: int):
    """Roll out latent ``z`` for a geometric(1 - gamma) length capped at the horizon
    so visit counts estimate the discounted occupancy."""
    rng = state.rng
    length = int(min(rng.geometric(1.0 - config.mdp.gamma), config.horizon))
    seed = int(rng.integers(2**63 - 1))
    if isinstance(state.population, SimplexPopulation):
        s = np.random.default_rng(seed).choice(config.mdp.n_states, size=length,
                                                p=state.population.points[z])
        state.buffer.extend(s, np.zeros_like(s), s, 0.0, z)
        return None
    traj = rollout(config.mdp, state.population.policy(z), length, seed)
    state.buffer.add_trajectory(traj, z)
    return traj


def intrinsic_reward(config: TrainConfig, state: TrainState, z: int) -> np.ndarray:
    if config.reward == "diayn-exact":
        return rw.diayn_reward(state.occs, state.prior, z)
    if config.reward == "diayn-empirical":
        return rw.diayn_reward_empirical(state.buffer, state.prior, z, config.mdp.n_states)
    if config.reward == "dgpo":
        return rw.dgpo_objective_gradient(state.occs, z)
    return rw.behavior_reward(state.population.policies(), state.occs, z)


def bandit_reward(prev_scores, new_scores, z: int, target: dv.DiversityTarget,
                  mode: str = "binary-unmet", prev_objective: float | None = None,
                  new_objective: float | None = None) -> float:
    """Reward fed back to the selector after updating policy ``z``.

    ``binary-unmet`` pays 1 when the chosen policy had not yet met its
    requirement. ``delta-f`` pays the objective gain clipped to ``[0, 1]``.
    """
    if mode == "binary-unmet":
        return 1.0 if prev_scores[z] < target.per_policy_delta else 0.0
    if mode == "delta-f":
        old = float(np.mean(prev_scores)) if prev_objective is None else prev_objective
        new = float(np.mean(new_scores)) if new_objective is None else new_objective
        return float(np.clip(new - old, 0.0, 1.0))
    raise ValueError(f"unknown bandit reward mode {mode!r}")


def train_step(state: TrainState, config: TrainConfig) -> tuple[TrainState, TrainingRecord]:
    target = config.target
    prev_scores, prev_obj = state.scores, state.objective

    extended = config.context == "extended"
    ctx = occupancy_context(state.occs, prev_scores if extended else None)
    z = state.selector.select(ctx, prev_scores, state.rng)

    traj = None
    if state.buffer is not None:
        traj = _collect(config, state, z)
    r_in = intrinsic_reward(config, state, z)

    pop = state.population
    if isinstance(pop, SimplexPopulation):
        pop = update_simplex(pop, z, r_in, config.lr)
    elif config.update == "sampled":
        pop = update_policy_sampled(config.mdp, pop, z, traj, r_in, config.lr)
    else:
        pop = update_policy_exact(config.mdp, pop, z, r_in, config.lr)

    occs = occupancies(config, pop)
    scores, obj = _measure(config, occs, state.prior)
    U = dv.build_diversity_matrix(occs)

    r = bandit_reward(prev_scores, scores, z, target, config.bandit_reward, prev_obj, obj)
    state.selector.update(z, ctx.features[z], r)
    if config.bandit_reward == "binary-unmet":
        state.ledger.record(r, float(np.any(prev_scores < target.per_policy_delta)))

    state.population, state.occs, state.scores, state.objective = pop, occs, scores, obj
    state.iteration += 1
    mi = obj if config.objective == "mi" else dv.mutual_information(occs, state.prior)
    record = TrainingRecord(
        iteration=state.iteration,
        selected_z=z,
        bandit_reward=r,
        mi=mi,
        f_sum=dv.f_sum(U),
        scores=tuple(float(s) for s in scores),
        target_reached=dv.target_reached(obj, target),
        occupancies=occs,
    )
    return state, record


@dataclass
class TrainingRun:
    config: TrainConfig
    initial_occupancies: np.ndarray
    initial_objective: float
    records: list
    state: TrainState

    @property
    def iterations_to_target(self) -> int:
        """First iteration inside the target set; the cap if never reached."""
        for rec in self.records:
            if rec.target_reached:
                return rec.iteration
        return self.config.max_iterations

    def objective_trace(self) -> np.ndarray:
        if self.config.objective == "mi":
            return np.array([rec.mi for rec in self.records])
        return np.array([rec.f_sum for rec in self.records])


def train(config: TrainConfig) -> TrainingRun:
    state = init_state(config)
    out = TrainingRun(config, state.occs, state.objective, [], state)
    for _ in range(config.max_iterations):
        state, rec = train_step(state, config)
        out.records.append(rec)
        if config.stop_at_target and rec.target_reached:
            break
    log.debug("run seed=%d selector=%s finished after %d iterations",
              config.seed, config.selector, len(out.records))
    return out


def run(config: TrainConfig) -> list:
    """Train until the diversity target is reached or the iteration cap."""
    return train(config).records


def ablation_base() -> TrainConfig:
    """Defaults for selector comparisons: fixed-length runs so curves line up,
    and LinUCB with one shared regression over occupancy-plus-score contexts
    (the score feature lets it notice when a policy's requirement is met)."""
    return TrainConfig(n_policies=8, delta=0.8, max_iterations=400, stop_at_target=False,
                       context="extended", shared=True)


@dataclass(frozen=True)
class AblationGrid:
    base: TrainConfig = field(default_factory=ablation_base)
    selectors: tuple = ("iteration", "uniform", "bandit-linucb")
    n_policies: tuple = (8,)
    deltas: tuple = (0.8,)
    seeds: tuple = (0, 1, 2, 3, 4, 5)

    def __post_init__(self):
        if len(self.selectors) < 2:
            raise ValueError("an ablation needs at least two selectors")

    def cells(self):
        for sel in self.selectors:
            for n in self.n_policies:
                for d in self.deltas:
                    yield sel, n, d

    def jobs(self):
        for sel, n, d in self.cells():
            for seed in self.seeds:
                yield (sel, n, d, seed), replace(self.base, selector=sel, n_policies=n,
                                                 delta=d, seed=seed)


@dataclass(frozen=True)
class CellResult:
    key: tuple
    objective: np.ndarray
    iterations_to_target: int
    reached: bool


@dataclass
class AblationReport:
    grid: AblationGrid
    results: list

    def rows(self):
        """``(selector, N, delta, seed, iteration, objective)`` per logged iteration."""
        for res in self.results:
            sel, n, d, seed = res.key
            for it, val in enumerate(res.objective, start=1):
                yield sel, n, d, seed, it, float(val)

    def cell_results(self, selector: str, n: int, delta: float) -> list:
        return [r for r in self.results if r.key[:3] == (selector, n, delta)]

    def summary(self):
        out = []
        for sel, n, d in self.grid.cells():
            res = self.cell_results(sel, n, d)
            out.append({
                "selector": sel, "N": n, "delta": d,
                "median_iterations_to_target": float(np.median([r.iterations_to_target for r in res])),
                "final_objective_mean": float(np.mean([r.objective[-1] for r in res])),
                "miss_fraction": float(np.mean([not r.reached for r in res])),
            })
        return out

    def mean_curve(self, selector: str, n: int, delta: float) -> np.ndarray:
        curves = [r.objective for r in self.cell_results(selector, n, delta)]
        T = max(len(c) for c in curves)
        # runs that stopped early hold their last value
        padded = np.array([np.pad(c, (0, T - len(c)), mode="edge") for c in curves])
        return padded.mean(axis=0)


def _run_job(item) -> CellResult:
    key, cfg = item
    tr = train(cfg)
    reached = any(r.target_reached for r in tr.records)
    return CellResult(key, tr.objective_trace(), tr.iterations_to_target, reached)


def run_ablation(grid: AblationGrid, workers: int = 1) -> AblationReport:
    """Run every (selector, N, delta, seed) cell; results come back in grid order."""
    items = list(grid.jobs())
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, items))
    else:
        results = [_run_job(it) for it in items]
    return AblationReport(grid, results)
