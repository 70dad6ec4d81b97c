"""Experiment runner: configuration, episode simulation, metrics and outputs.

An experiment is a grid of cells ``agent x user x replicate``.  Each cell
owns a fresh agent and a generator seeded from ``(master_seed, user,
replicate)``; agents facing the same user and replicate therefore see
common random numbers.  Episodes start from a uniform (or fixed) item and
continue after every step with probability ``discount``, so their mean
length is ``1 / (1 - discount)``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numba import types
from numba.typed import List as TypedList

from . import _kernels as kern
from .agents import Agent, AgentConfig, Algorithm, ChoiceModelOracle
from .catalog import Catalog, CostMode, Slate, build_catalog
from .errors import CapacityError, ConfigError
from .exact import evaluate_deterministic_policy, value_iteration
from .users import UserModel, UserVariant

log = logging.getLogger(__name__)

CSV_HEADER = "episode,agent,user,seed,return,length,updates"


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Environment:
    catalog: Catalog
    user: UserModel
    cost_mode: CostMode = CostMode.STATE


@dataclass(frozen=True)
class UserSpec:
    name: str
    variant: UserVariant
    alpha: float = 1.0
    excluded: tuple[int, ...] = ()
    required: tuple[int, ...] = ()
    reject_full_catalog: bool = True

    def build(self, k: int) -> UserModel:
        return UserModel(
            self.variant,
            k,
            alpha=self.alpha,
            excluded_set=frozenset(self.excluded),
            required_set=frozenset(self.required),
            reject_full_catalog=self.reject_full_catalog,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    k: int
    slate_size: int
    users: tuple[UserSpec, ...]
    agents: tuple[AgentConfig, ...]
    episodes: int
    low_cost_overrides: tuple[tuple[int, float], ...] = ()
    cost_seed: int = 0
    penalty: float = 0.0
    cost_mode: CostMode = CostMode.STATE
    discount: float = 0.85
    smoothing_window: int = 200
    start_state: int | None = None
    return_mode: str = "undiscounted"
    master_seed: int = 0
    replicates: int = 1
    eval_points: tuple[int, ...] = ()
    name: str = "experiment"

    def __post_init__(self):
        object.__setattr__(self, "cost_mode", CostMode(self.cost_mode))
        if self.episodes < 1:
            raise ConfigError("episodes must be positive")
        if not 1 <= self.smoothing_window <= self.episodes:
            raise ConfigError("smoothing_window must lie in [1, episodes]")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("discount must lie in (0, 1)")
        if self.return_mode not in ("undiscounted", "discounted"):
            raise ConfigError(f"unknown return_mode {self.return_mode!r}")
        if self.start_state is not None and not 0 <= self.start_state < self.k:
            raise ConfigError(f"start_state {self.start_state} outside [0, {self.k})")
        if self.replicates < 1:
            raise ConfigError("replicates must be positive")
        if any(not 1 <= p <= self.episodes for p in self.eval_points):
            raise ConfigError("eval_points must lie in [1, episodes]")
        for kind, names in (
            ("user", [u.name for u in self.users]),
            ("agent", [a.label for a in self.agents]),
        ):
            if len(set(names)) != len(names):
                raise ConfigError(f"duplicate {kind} names: {names}")
        if not self.users or not self.agents:
            raise ConfigError("need at least one user and one agent")

    def catalog(self) -> Catalog:
        return build_catalog(self.k, self.low_cost_overrides, self.cost_seed, self.penalty)

    def environment(self, user: UserSpec) -> Environment:
        return Environment(self.catalog(), user.build(self.k), self.cost_mode)

    def to_dict(self) -> dict:
        return _config_to_dict(self)


_TOP_KEYS = {
    "name", "catalog", "slate_size", "cost_mode", "discount", "users", "agents",
    "episodes", "replicates", "smoothing_window", "start_state", "return_mode",
    "master_seed", "eval_points",
}
_CATALOG_KEYS = {"k", "low_cost_overrides", "cost_seed", "penalty"}
_USER_KEYS = {"name", "variant", "alpha", "excluded", "required", "reject_full_catalog"}
_AGENT_KEYS = {
    "algorithm", "name", "gamma", "lambda", "epsilon", "optimistic_init", "seed",
    "updates_per_step", "slateq_reject_update", "slateq_bootstrap",
}


def _reject_unknown(where: str, data: dict, allowed: set) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")


def _require(where: str, data: dict, key: str):
    if key not in data:
        raise ConfigError(f"{where} is missing required key {key!r}")
    return data[key]


def config_from_dict(data: dict) -> ExperimentConfig:
    """Parse the JSON experiment schema; unknown keys are rejected."""
    try:
        return _parse_config(data)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _parse_config(data: dict) -> ExperimentConfig:
    _reject_unknown("config", data, _TOP_KEYS)
    cat = _require("config", data, "catalog")
    _reject_unknown("catalog", cat, _CATALOG_KEYS)
    discount = float(data.get("discount", 0.85))

    users = []
    for i, u in enumerate(_require("config", data, "users")):
        _reject_unknown(f"users[{i}]", u, _USER_KEYS)
        variant = UserVariant(_require(f"users[{i}]", u, "variant"))
        users.append(
            UserSpec(
                name=str(u.get("name", variant.value)),
                variant=variant,
                alpha=float(u.get("alpha", 1.0)),
                excluded=tuple(int(x) for x in u.get("excluded", ())),
                required=tuple(int(x) for x in u.get("required", ())),
                reject_full_catalog=bool(u.get("reject_full_catalog", True)),
            )
        )

    agents = []
    for i, a in enumerate(_require("config", data, "agents")):
        _reject_unknown(f"agents[{i}]", a, _AGENT_KEYS)
        agents.append(
            AgentConfig(
                algorithm=Algorithm(_require(f"agents[{i}]", a, "algorithm")),
                gamma=float(a.get("gamma", 0.004)),
                discount=float(a.get("lambda", discount)),
                epsilon=float(a.get("epsilon", 0.05)),
                optimistic_init=float(a.get("optimistic_init", 0.0)),
                seed=a.get("seed"),
                updates_per_step=a.get("updates_per_step"),
                slateq_reject_update=a.get("slateq_reject_update", "none"),
                slateq_bootstrap=a.get("slateq_bootstrap", "greedy"),
                name=a.get("name"),
            )
        )

    overrides = cat.get("low_cost_overrides", ())
    if isinstance(overrides, dict):
        raise ConfigError("low_cost_overrides must be a list of [item, base] pairs")
    start = data.get("start_state", "uniform")
    return ExperimentConfig(
        name=str(data.get("name", "experiment")),
        k=int(_require("catalog", cat, "k")),
        low_cost_overrides=tuple((int(i), float(v)) for i, v in overrides),
        cost_seed=int(cat.get("cost_seed", 0)),
        penalty=float(cat.get("penalty", 0.0)),
        slate_size=int(_require("config", data, "slate_size")),
        cost_mode=CostMode(data.get("cost_mode", "state")),
        discount=discount,
        users=tuple(users),
        agents=tuple(agents),
        episodes=int(_require("config", data, "episodes")),
        replicates=int(data.get("replicates", 1)),
        smoothing_window=int(data.get("smoothing_window", 200)),
        start_state=None if start in ("uniform", None) else int(start),
        return_mode=str(data.get("return_mode", "undiscounted")),
        master_seed=int(data.get("master_seed", 0)),
        eval_points=tuple(sorted({int(p) for p in data.get("eval_points", ())})),
    )


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def _config_to_dict(cfg: ExperimentConfig) -> dict:
    agents = []
    for a in cfg.agents:
        entry = {
            "algorithm": a.algorithm.value,
            "name": a.name,
            "gamma": a.gamma,
            "lambda": a.discount,
            "epsilon": a.epsilon,
            "optimistic_init": a.optimistic_init,
            "seed": a.seed,
            "updates_per_step": a.updates_per_step,
            "slateq_reject_update": a.slateq_reject_update,
            "slateq_bootstrap": a.slateq_bootstrap,
        }
        agents.append(entry)
    return {
        "name": cfg.name,
        "catalog": {
            "k": cfg.k,
            "low_cost_overrides": [list(p) for p in cfg.low_cost_overrides],
            "cost_seed": cfg.cost_seed,
            "penalty": cfg.penalty,
        },
        "slate_size": cfg.slate_size,
        "cost_mode": cfg.cost_mode.value,
        "discount": cfg.discount,
        "users": [
            {
                "name": u.name,
                "variant": u.variant.value,
                "alpha": u.alpha,
                "excluded": list(u.excluded),
                "required": list(u.required),
                "reject_full_catalog": u.reject_full_catalog,
            }
            for u in cfg.users
        ],
        "agents": agents,
        "episodes": cfg.episodes,
        "replicates": cfg.replicates,
        "smoothing_window": cfg.smoothing_window,
        "start_state": "uniform" if cfg.start_state is None else cfg.start_state,
        "return_mode": cfg.return_mode,
        "master_seed": cfg.master_seed,
        "eval_points": list(cfg.eval_points),
    }


# --------------------------------------------------------------------------
# simulation


@dataclass
class Step:
    state: int
    slate: Slate
    next_state: int
    cost: float


@dataclass
class EpisodeResult:
    value: float
    length: int
    updates: int
    transcript: list[Step]


_STEP_TYPE = types.Tuple((types.int64, types.int64, types.int64, types.int64, types.float64))


def simulate(
    env: Environment,
    agent: Agent,
    rng: np.random.Generator,
    episodes: int,
    discount: float,
    start_state: int | None = None,
    return_mode: str = "undiscounted",
    record: bool = False,
):
    """Run ``episodes`` learning episodes; returns ``(returns, lengths, updates, trace)``."""
    if env.user.k != agent.k or env.catalog.size_k != agent.k:
        raise ConfigError("environment and agent disagree on K")
    returns = np.empty(episodes)
    lengths = np.empty(episodes, dtype=np.int64)
    updates = np.empty(episodes, dtype=np.int64)
    steps = TypedList.empty_list(_STEP_TYPE)
    slates = TypedList.empty_list(types.int64[:])
    cfg = agent.config
    kern.run_episodes(
        cfg.algorithm.code, agent.k, agent.n, agent.updates_per_step,
        float(cfg.gamma), float(cfg.discount), float(cfg.epsilon),
        env.catalog.costs, float(env.catalog.penalty), CostMode(env.cost_mode) is CostMode.SLATE,
        *env.user.kernel_args(),
        *agent.oracle_args(),
        agent.item_q, agent.null_q, agent.slate_q, agent.slate_items, agent.binom,
        cfg.slateq_reject_update == "null-item", cfg.slateq_bootstrap == "greedy",
        -1 if start_state is None else int(start_state), float(discount),
        return_mode == "discounted", rng,
        returns, lengths, updates,
        record, steps, slates,
    )
    trace = None
    if record:
        trace = [
            Step(int(s), tuple(int(i) for i in w), int(s2), float(c))
            for (_, _, s, s2, c), w in zip(steps, slates)
        ]
    return returns, lengths, updates, trace


def run_episode(
    env: Environment,
    agent: Agent,
    discount: float,
    rng: np.random.Generator,
    start_state: int | None = None,
    return_mode: str = "undiscounted",
) -> EpisodeResult:
    """One learning episode with its full transcript."""
    returns, lengths, updates, trace = simulate(
        env, agent, rng, 1, discount, start_state, return_mode, record=True
    )
    return EpisodeResult(float(returns[0]), int(lengths[0]), int(updates[0]), trace)


def make_agent(config: AgentConfig, env: Environment, n: int) -> Agent:
    oracle = ChoiceModelOracle(env.user) if config.algorithm is Algorithm.SLATEQ else None
    return Agent(config, env.catalog.size_k, n, oracle)


# --------------------------------------------------------------------------
# metrics


def smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average what exists."""
    values = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be positive")
    csum = np.concatenate(([0.0], np.cumsum(values)))
    idx = np.arange(1, values.shape[0] + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def first_entry(smoothed: np.ndarray, target: float, band: float, window: int = 1) -> int | None:
    """First 1-based episode whose full-window average is within ``band`` of ``target``."""
    ok = np.abs(smoothed - target) <= band * abs(target)
    ok[: window - 1] = False
    hits = np.flatnonzero(ok)
    return int(hits[0]) + 1 if hits.size else None


def cell_seed(master_seed: int, user: str, replicate: int) -> int:
    seq = np.random.SeedSequence([master_seed, zlib.crc32(user.encode()), replicate])
    return int(seq.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class Snapshot:
    episode: int
    greedy_value_mean: float
    oracle_gap: float | None


@dataclass
class CellResult:
    agent: str
    user: str
    replicate: int
    seed: int
    returns: np.ndarray
    lengths: np.ndarray
    updates: np.ndarray
    snapshots: list[Snapshot]
    greedy_values: np.ndarray
    optimal_values: np.ndarray | None
    agent_state: Agent | None = None
    notices: list[str] = field(default_factory=list)

    @property
    def oracle_gap(self) -> float | None:
        if self.optimal_values is None:
            return None
        return float(self.greedy_values.mean() / self.optimal_values.mean() - 1.0)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list[CellResult]
    optimal_values: dict[str, np.ndarray | None]
    notices: list[str]

    def cell(self, agent: str, user: str, replicate: int = 0) -> CellResult:
        for c in self.cells:
            if (c.agent, c.user, c.replicate) == (agent, user, replicate):
                return c
        raise KeyError((agent, user, replicate))


def optimal_values_for(cfg: ExperimentConfig, env: Environment) -> np.ndarray | None:
    try:
        return value_iteration(env.user, env.catalog, cfg.slate_size, cfg.discount, cfg.cost_mode).values
    except CapacityError:
        return None


def run_cell(
    cfg: ExperimentConfig,
    agent_cfg: AgentConfig,
    user: UserSpec,
    replicate: int,
    optimal: np.ndarray | None = None,
    keep_agent: bool = False,
) -> CellResult:
    env = cfg.environment(user)
    seed = agent_cfg.seed if agent_cfg.seed is not None else cell_seed(cfg.master_seed, user.name, replicate)
    agent = make_agent(agent_cfg, env, cfg.slate_size)
    rng = np.random.default_rng(seed)

    bounds = sorted(set(cfg.eval_points) | {cfg.episodes})
    parts, snapshots = [], []
    done = 0
    for stop in bounds:
        parts.append(
            simulate(env, agent, rng, stop - done, cfg.discount, cfg.start_state, cfg.return_mode)[:3]
        )
        done = stop
        values = evaluate_deterministic_policy(
            agent.greedy_policy(), env.user, env.catalog, cfg.discount, cfg.cost_mode
        )
        gap = None if optimal is None else float(values.mean() / optimal.mean() - 1.0)
        if stop in cfg.eval_points:
            snapshots.append(Snapshot(stop, float(values.mean()), gap))
    returns, lengths, updates = (np.concatenate(x) for x in zip(*parts))
    notices = [] if optimal is not None else [f"{user.name}: no oracle at this size, gaps omitted"]
    return CellResult(
        agent_cfg.label, user.name, replicate, int(seed), returns, lengths, updates,
        snapshots, values, optimal, agent if keep_agent else None, notices,
    )


def _run_cell_job(args):
    return run_cell(*args)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | os.PathLike | None = None,
    jobs: int = 1,
    keep_agents: bool = False,
) -> ExperimentResult:
    """Run every (agent, user, replicate) cell; optionally write CSV + summary JSON.

    Cells whose agent cannot be built (vanilla tables over the capacity
    limit) are skipped and reported in ``notices``.
    """
    notices: list[str] = []
    optimal: dict[str, np.ndarray | None] = {}
    for user in cfg.users:
        optimal[user.name] = optimal_values_for(cfg, cfg.environment(user))
        if optimal[user.name] is None:
            notices.append(f"{user.name}: oracle skipped, instance exceeds enumeration capacity")

    jobs_list = []
    for agent_cfg in cfg.agents:
        if agent_cfg.algorithm.is_vanilla:
            try:
                from .catalog import check_capacity

                check_capacity(cfg.k, cfg.slate_size)
            except CapacityError as exc:
                notices.append(f"{agent_cfg.label}: refused ({exc})")
                continue
        for user in cfg.users:
            for rep in range(cfg.replicates):
                jobs_list.append((cfg, agent_cfg, user, rep, optimal[user.name], keep_agents))

    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell_job, jobs_list))
    else:
        cells = [_run_cell_job(j) for j in jobs_list]
    for c in cells:
        log.info("cell %s/%s/%d: tail %.3f", c.agent, c.user, c.replicate, c.returns[-cfg.smoothing_window:].mean())

    result = ExperimentResult(cfg, cells, optimal, notices)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(result, out / "episodes.csv")
        (out / "summary.json").write_text(json.dumps(summary(result), indent=2) + "\n")
    return result


# --------------------------------------------------------------------------
# outputs


def write_csv(result: ExperimentResult, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for c in result.cells:
            prefix = f"{c.agent},{c.user},{c.seed}"
            block = "\n".join(
                f"{i},{prefix},{r!r},{n},{u}"
                for i, (r, n, u) in enumerate(
                    zip(c.returns.tolist(), c.lengths.tolist(), c.updates.tolist()), start=1
                )
            )
            fh.write(block + "\n")


def _clean(x: Any):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def summary(result: ExperimentResult) -> dict:
    cfg = result.config
    cells = []
    for c in result.cells:
        window = cfg.smoothing_window
        steps = int(c.lengths.sum())
        entry = {
            "agent": c.agent,
            "user": c.user,
            "replicate": c.replicate,
            "seed": c.seed,
            "episodes": int(c.returns.shape[0]),
            "steps": steps,
            "updates": int(c.updates.sum()),
            "mean_length": float(c.lengths.mean()),
            "tail_mean": float(c.returns[-window:].mean()),
            "greedy_value_mean": float(c.greedy_values.mean()),
            "greedy_values": [float(v) for v in c.greedy_values],
            "optimal_value_mean": None if c.optimal_values is None else float(c.optimal_values.mean()),
            "oracle_gap": _clean(c.oracle_gap),
            "snapshots": [dataclasses.asdict(s) for s in c.snapshots],
            "notices": c.notices,
        }
        cells.append(entry)
    return {
        "config": cfg.to_dict(),
        "optimal_values": {
            name: None if v is None else [float(x) for x in v]
            for name, v in result.optimal_values.items()
        },
        "cells": cells,
        "notices": result.notices,
    }
