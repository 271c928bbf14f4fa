"""YAML run configuration with fail-fast, line-anchored validation.

A config file has one mapping per section. Sections and keys::

    mdp:         preset (three-state | explicit), gamma, n_states, n_actions,
                 transition (flattened s, a, s'), initial_dist
    population:  n_policies*, mode (simplex | logits), step_size
    selector:    key, alpha, epsilon, context (occupancy | extended), shared,
                 bandit_reward (binary-unmet | delta-f)
    reward:      key (diayn-exact | diayn-empirical | dgpo | behavior),
                 update (exact | sampled), horizon, buffer_capacity
    diversity:   objective (mi | f_sum), delta*, per_policy_delta
    train:       max_iterations*, seed, stop_at_target
    ablation:    selectors, n_policies, deltas, seeds
    bench:       algorithms, dim, n_arms, rounds, seeds, alpha, epsilon

Starred keys are required for ``train`` and ``ablate``. Unknown sections or
keys are errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .mdp import FiniteMDP, MDPError, make_three_state_mdp
from .trainer import AblationGrid, TrainConfig

SCHEMA = {
    "mdp": {"preset", "gamma", "n_states", "n_actions", "transition", "initial_dist"},
    "population": {"n_policies", "mode", "step_size"},
    "selector": {"key", "alpha", "epsilon", "context", "shared", "bandit_reward"},
    "reward": {"key", "update", "horizon", "buffer_capacity"},
    "diversity": {"objective", "delta", "per_policy_delta"},
    "train": {"max_iterations", "seed", "stop_at_target"},
    "ablation": {"selectors", "n_policies", "deltas", "seeds"},
    "bench": {"algorithms", "dim", "n_arms", "rounds", "seeds", "alpha", "epsilon"},
}
REQUIRED_TRAIN = ("population.n_policies", "diversity.delta", "train.max_iterations")


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "<config>", line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


@dataclass
class RawConfig:
    """Parsed sections plus the 1-based line of every ``section.key``."""

    data: dict
    lines: dict
    path: str = "<config>"

    def has(self, dotted: str) -> bool:
        section, _, key = dotted.partition(".")
        return key in self.data.get(section, {})

    def get(self, dotted: str, default=None):
        section, _, key = dotted.partition(".")
        return self.data.get(section, {}).get(key, default)

    def error(self, message: str, dotted: str | None = None) -> ConfigError:
        line = self.lines.get(dotted) if dotted else None
        if line is None and dotted:
            line = self.lines.get(dotted.partition(".")[0])
        return ConfigError(message, self.path, line)

    def require(self, *keys: str) -> None:
        for k in keys:
            if not self.has(k):
                raise self.error(f"missing required key '{k}'", k)


def parse_config(text: str, path: str = "<config>") -> RawConfig:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}", path,
                          mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigError("config file is empty", path, 1)
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("top level must be a mapping of sections", path,
                          root.start_mark.line + 1)
    lines = {}
    for k_node, v_node in root.value:
        section = k_node.value
        lines[section] = k_node.start_mark.line + 1
        if section not in SCHEMA:
            raise ConfigError(f"unknown section '{section}'", path, lines[section])
        if isinstance(v_node, yaml.ScalarNode) and v_node.tag == "tag:yaml.org,2002:null":
            data[section] = {}
            continue
        if not isinstance(v_node, yaml.MappingNode):
            raise ConfigError(f"section '{section}' must be a mapping", path, lines[section])
        for kk, _ in v_node.value:
            dotted = f"{section}.{kk.value}"
            lines[dotted] = kk.start_mark.line + 1
            if kk.value not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{kk.value}' in section '{section}'",
                                  path, lines[dotted])
    return RawConfig(data, lines, path)


def load_config(path) -> RawConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))


def build_mdp(raw: RawConfig) -> FiniteMDP:
    gamma = raw.get("mdp.gamma", 0.9)
    preset = raw.get("mdp.preset", "three-state" if not raw.has("mdp.transition") else "explicit")
    try:
        if preset == "three-state":
            return make_three_state_mdp(float(gamma))
        if preset != "explicit":
            raise raw.error(f"unknown mdp preset {preset!r}", "mdp.preset")
        raw.require("mdp.n_states", "mdp.n_actions", "mdp.transition", "mdp.initial_dist")
        S, A = int(raw.get("mdp.n_states")), int(raw.get("mdp.n_actions"))
        flat = np.asarray(raw.get("mdp.transition"), dtype=float)
        if flat.size != S * A * S:
            raise raw.error(f"transition needs {S * A * S} entries, got {flat.size}",
                            "mdp.transition")
        return FiniteMDP(flat.reshape(S, A, S), raw.get("mdp.initial_dist"), float(gamma))
    except (MDPError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise raw.error(str(exc), "mdp") from None


def mdp_to_config(mdp: FiniteMDP) -> dict:
    return {"preset": "explicit", "gamma": mdp.gamma, "n_states": mdp.n_states,
            "n_actions": mdp.n_actions, "transition": mdp.transition.ravel().tolist(),
            "initial_dist": mdp.initial_dist.tolist()}


_TRAIN_KEYS = {
    "population.n_policies": ("n_policies", int),
    "population.mode": ("mode", str),
    "population.step_size": ("step_size", float),
    "selector.key": ("selector", str),
    "selector.alpha": ("alpha", float),
    "selector.epsilon": ("epsilon", float),
    "selector.context": ("context", str),
    "selector.shared": ("shared", bool),
    "selector.bandit_reward": ("bandit_reward", str),
    "reward.key": ("reward", str),
    "reward.update": ("update", str),
    "reward.horizon": ("horizon", int),
    "reward.buffer_capacity": ("buffer_capacity", int),
    "diversity.objective": ("objective", str),
    "diversity.delta": ("delta", float),
    "diversity.per_policy_delta": ("per_policy_delta", float),
    "train.max_iterations": ("max_iterations", int),
    "train.seed": ("seed", int),
    "train.stop_at_target": ("stop_at_target", bool),
}


def _convert(raw: RawConfig, dotted: str, kind):
    value = raw.get(dotted)
    if value is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise raw.error(f"'{dotted}' must be true or false", dotted)
        return value
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise raw.error(f"'{dotted}' must be of type {kind.__name__}", dotted) from None


def build_train_config(raw: RawConfig, base: TrainConfig | None = None,
                       require: bool = True) -> TrainConfig:
    if require:
        raw.require(*REQUIRED_TRAIN)
    kwargs = {}
    for dotted, (name, kind) in _TRAIN_KEYS.items():
        if raw.has(dotted):
            kwargs[name] = _convert(raw, dotted, kind)
    kwargs["mdp"] = build_mdp(raw)
    defaults = base.__dict__ if base is not None else {}
    merged = {**defaults, **kwargs}
    try:
        return TrainConfig(**merged)
    except ValueError as exc:
        name = str(exc).split(" ", 1)[0]
        dotted = next((d for d, (n, _) in _TRAIN_KEYS.items() if n == name), None)
        raise raw.error(str(exc), dotted) from None


def build_ablation_grid(raw: RawConfig) -> AblationGrid:
    default = AblationGrid()
    # ablation runs keep the training defaults of the default grid unless overridden
    base = build_train_config(raw, base=default.base, require=False)
    kwargs = {}
    for key in ("selectors", "n_policies", "deltas", "seeds"):
        dotted = f"ablation.{key}"
        if raw.has(dotted):
            value = raw.get(dotted)
            if not isinstance(value, list) or not value:
                raise raw.error(f"'{dotted}' must be a non-empty list", dotted)
            kwargs[key] = tuple(value)
    try:
        return AblationGrid(base=base, **kwargs)
    except ValueError as exc:
        raise raw.error(str(exc), "ablation") from None


@dataclass(frozen=True)
class BenchConfig:
    algorithms: tuple = ("linucb", "ucb1", "uniform")
    dim: int = 4
    n_arms: int = 8
    rounds: int = 10_000
    seeds: tuple = (0, 1, 2, 3, 4)
    alpha: float = 1.0
    epsilon: float = 0.1


def build_bench_config(raw: RawConfig) -> BenchConfig:
    from .bandit_bench import ALGORITHMS

    kwargs = {}
    for key, kind in [("dim", int), ("n_arms", int), ("rounds", int),
                      ("alpha", float), ("epsilon", float)]:
        if raw.has(f"bench.{key}"):
            kwargs[key] = _convert(raw, f"bench.{key}", kind)
    for key in ("algorithms", "seeds"):
        if raw.has(f"bench.{key}"):
            value = raw.get(f"bench.{key}")
            if not isinstance(value, list) or not value:
                raise raw.error(f"'bench.{key}' must be a non-empty list", f"bench.{key}")
            kwargs[key] = tuple(value)
    cfg = BenchConfig(**kwargs)
    bad = [a for a in cfg.algorithms if a not in ALGORITHMS]
    if bad:
        raise raw.error(f"unknown algorithm {bad[0]!r}; expected one of {ALGORITHMS}",
                        "bench.algorithms")
    if cfg.rounds < 100:
        raise raw.error("'bench.rounds' must be >= 100", "bench.rounds")
    return cfg
