"""Tabular slate learners.

Five algorithms share one epsilon-greedy exploration scheme:

``vanilla-q`` / ``vanilla-sarsa``
    one value per (state, slate), ``C(K-1, N)`` entries per state.
``slatefree-q`` / ``slatefree-sarsa``
    one value per (state, item); every step updates all ``N`` items of the
    recommended slate with the same target.  Model-free.
``slateq``
    one value per (state, item), but only the consumed item is updated and
    the bootstrap weights next-slate items with the true choice model.

Costs are minimised, so greedy means smallest value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels as kern
from .catalog import (
    Slate,
    canonical_slate,
    check_capacity,
    count_slates,
    new_item_table,
    rank_slate,
    slate_table,
)
from .errors import ConfigError
from .users import UserModel, choice_distribution

DEFAULT_GAMMA = 0.004
DEFAULT_EPSILON = 0.05
DEFAULT_DISCOUNT = 0.85


class Algorithm(str, enum.Enum):
    VANILLA_Q = "vanilla-q"
    VANILLA_SARSA = "vanilla-sarsa"
    SLATEFREE_Q = "slatefree-q"
    SLATEFREE_SARSA = "slatefree-sarsa"
    SLATEQ = "slateq"

    @property
    def code(self) -> int:
        return _CODES[self]

    @property
    def is_vanilla(self) -> bool:
        return self in (Algorithm.VANILLA_Q, Algorithm.VANILLA_SARSA)

    @property
    def is_slatefree(self) -> bool:
        return self in (Algorithm.SLATEFREE_Q, Algorithm.SLATEFREE_SARSA)


_CODES = {
    Algorithm.VANILLA_Q: kern.VANILLA_Q,
    Algorithm.VANILLA_SARSA: kern.VANILLA_SARSA,
    Algorithm.SLATEFREE_Q: kern.SLATEFREE_Q,
    Algorithm.SLATEFREE_SARSA: kern.SLATEFREE_SARSA,
    Algorithm.SLATEQ: kern.SLATEQ,
}


@dataclass(frozen=True)
class AgentConfig:
    algorithm: Algorithm
    gamma: float = DEFAULT_GAMMA
    discount: float = DEFAULT_DISCOUNT
    epsilon: float = DEFAULT_EPSILON
    optimistic_init: float = 0.0
    seed: int | None = None
    updates_per_step: int | None = None
    slateq_reject_update: str = "none"
    slateq_bootstrap: str = "greedy"
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"learning rate must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError(f"discount must lie in [0, 1), got {self.discount}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.updates_per_step is not None:
            if not self.algorithm.is_slatefree:
                raise ConfigError("updates_per_step only applies to slatefree agents")
            if self.updates_per_step < 1:
                raise ConfigError("updates_per_step must be at least 1")
        if self.slateq_reject_update not in ("none", "null-item"):
            raise ConfigError(f"unknown slateq_reject_update {self.slateq_reject_update!r}")
        if self.slateq_bootstrap not in ("greedy", "taken"):
            raise ConfigError(f"unknown slateq_bootstrap {self.slateq_bootstrap!r}")

    @property
    def label(self) -> str:
        return self.name or self.algorithm.value


@dataclass(frozen=True)
class ChoiceModelOracle:
    """Access to the true user choice model; handed only to SlateQ agents."""

    model: UserModel

    def slate_probabilities(self, s: int, slate: Sequence[int]) -> np.ndarray:
        return choice_distribution(self.model, s, slate)


@dataclass
class Agent:
    """Learner state: config plus the table(s) it owns."""

    config: AgentConfig
    k: int
    n: int
    oracle: ChoiceModelOracle | None = None
    item_q: np.ndarray = field(init=False, repr=False)
    null_q: np.ndarray = field(init=False, repr=False)
    slate_q: np.ndarray = field(init=False, repr=False)
    slate_items: np.ndarray = field(init=False, repr=False)
    binom: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.n <= self.k - 1:
            raise ConfigError(f"slate size {self.n} invalid for K={self.k}")
        algo = self.config.algorithm
        init = self.config.optimistic_init
        if algo is Algorithm.SLATEQ:
            if self.oracle is None:
                raise ConfigError("slateq needs a choice-model oracle")
            if self.oracle.model.k != self.k:
                raise ConfigError("oracle catalog size does not match the agent")
        elif self.oracle is not None:
            raise ConfigError(f"{algo.value} is model-free and must not hold an oracle")
        if algo.is_vanilla:
            check_capacity(self.k, self.n)
            self.slate_items = slate_table(self.k, self.n)
            self.slate_q = np.full(self.slate_items.shape[:2], float(init))
            self.item_q = np.zeros((1, 1))
            self.binom = kern.binomial_table(self.k - 1, self.n)
        else:
            self.item_q = new_item_table(self.k, init)
            self.slate_q = np.zeros((1, 1))
            self.slate_items = np.zeros((1, 1, self.n), dtype=np.int64)
            self.binom = np.zeros((1, 1), dtype=np.int64)
        self.null_q = np.full(self.k, float(init))

    @property
    def label(self) -> str:
        return self.config.label

    @property
    def updates_per_step(self) -> int:
        if self.config.updates_per_step is None:
            return self.n
        return min(self.config.updates_per_step, self.n)

    def oracle_args(self) -> tuple:
        if self.oracle is None:
            # placeholder arrays; kernels only read them for slateq
            empty = np.zeros(self.k, dtype=np.bool_)
            return (kern.USER1, 1.0, empty, empty, True)
        return self.oracle.model.kernel_args()

    def greedy_slate(self, s: int) -> Slate:
        if self.config.algorithm.is_vanilla:
            r = kern.argmin_first(self.slate_q[s])
            return tuple(int(i) for i in self.slate_items[s, r])
        return greedy_slate(self.item_q[s], s, self.n)

    def greedy_policy(self) -> list[Slate]:
        return [self.greedy_slate(s) for s in range(self.k)]

    def act(self, s: int, rng: np.random.Generator) -> Slate:
        return epsilon_greedy_action(self, s, rng)

    def copy(self) -> "Agent":
        twin = replace(self)
        for name in ("item_q", "null_q", "slate_q"):
            setattr(twin, name, getattr(self, name).copy())
        return twin


# --------------------------------------------------------------------------
# slate selection


def greedy_slate(item_q_row: Sequence[float], s: int, n: int) -> Slate:
    """The ``n`` items other than ``s`` with the smallest values; ties to lower ids."""
    row = np.asarray(item_q_row, dtype=np.float64)
    k = row.shape[0]
    if not 1 <= n <= k - 1:
        raise ConfigError(f"slate size {n} invalid for K={k}")
    out = np.empty(n, dtype=np.int64)
    kern.greedy_items(row, s, n, out, np.empty(k, dtype=np.bool_))
    return tuple(int(i) for i in out)


def epsilon_greedy_action(agent: Agent, s: int, rng: np.random.Generator) -> Slate:
    """Uniform random slate with probability epsilon, else the greedy one.

    Consumes the generator exactly like the simulation kernel does.
    """
    out = np.empty(agent.n, dtype=np.int64)
    kern.act(
        agent.config.algorithm.code, rng, agent.config.epsilon, agent.k, agent.n, s,
        agent.item_q, agent.slate_q, agent.slate_items, agent.binom,
        out, np.empty(agent.k, dtype=np.int64), np.empty(agent.k, dtype=np.bool_),
    )
    return tuple(int(i) for i in out)


# --------------------------------------------------------------------------
# single-step updates on bare tables


def _slate_array(slate: Sequence[int], k: int, s: int) -> np.ndarray:
    return np.asarray(canonical_slate(slate, k, s), dtype=np.int64)


def vanilla_sarsa_update(table, s, slate, cost, s2, slate2, gamma, lam):
    """``Q(s,w) += gamma [cost + lam Q(s',w') - Q(s,w)]`` on a slate table."""
    k = table.shape[0]
    kern.vanilla_sarsa_update(
        table, s, rank_slate(slate, k, s), float(cost), s2, rank_slate(slate2, k, s2), gamma, lam
    )
    return table


def vanilla_q_update(table, s, slate, cost, s2, gamma, lam):
    """Like SARSA with the bootstrap ``min_w' Q(s', w')`` over every slate at ``s'``."""
    k = table.shape[0]
    kern.vanilla_q_update(table, s, rank_slate(slate, k, s), float(cost), s2, gamma, lam)
    return table


def slatefree_sarsa_update(table, s, slate, item_costs, s2, slate2, gamma, lam):
    """For each ``j`` in the slate: ``Q(s,j) += gamma [c_j + lam/N sum_{k in w'} Q(s',k) - Q(s,j)]``.

    ``item_costs`` is either one cost per slate item or a scalar shared by all.
    All updates read the table as it was before the step.
    """
    k = table.shape[0]
    arr = _slate_array(slate, k, s)
    arr2 = _slate_array(slate2, k, s2)
    costs = np.broadcast_to(np.asarray(item_costs, dtype=np.float64), arr.shape).copy()
    positions = np.arange(arr.shape[0])
    kern.slatefree_sarsa_update(table, s, arr, positions, arr.shape[0], costs, s2, arr2, gamma, lam)
    return table


def slatefree_q_update(table, s, slate, cost, s2, gamma, lam):
    """For each ``j`` in the slate: ``Q(s,j) += gamma [cost + lam min_{l != s'} Q(s',l) - Q(s,j)]``."""
    k = table.shape[0]
    arr = _slate_array(slate, k, s)
    positions = np.arange(arr.shape[0])
    kern.slatefree_q_update(table, s, arr, positions, arr.shape[0], float(cost), s2, gamma, lam)
    return table


def slateq_update(
    table,
    s,
    slate,
    selected,
    cost,
    s2,
    next_slate,
    oracle: ChoiceModelOracle | None,
    gamma,
    lam,
    null_q: np.ndarray | None = None,
):
    """Update only the consumed item ``selected`` (``None`` means rejection).

    The bootstrap is ``sum_{k in w'} P(k | s', w') Q(s', k)`` with the
    oracle's probabilities renormalised over ``w'``.  Passing ``null_q``
    switches to the null-item variant: rejections update ``null_q[s]`` and
    the bootstrap keeps the rejection mass on ``null_q[s']``.
    Returns the number of entries touched (0 or 1).
    """
    if oracle is None:
        raise ConfigError("slateq needs a choice-model oracle")
    k = table.shape[0]
    _slate_array(slate, k, s)
    boot = _slate_array(next_slate, k, s2)
    probs = oracle.slate_probabilities(s2, boot)
    if selected is not None and selected not in slate:
        raise ConfigError(f"selected item {selected} is not in the slate")
    null_item = null_q is not None
    if null_q is None:
        null_q = np.zeros(k)
    return kern.slateq_update(
        table, null_q, s, float(cost), s2, -1 if selected is None else int(selected),
        boot, probs, gamma, lam, null_item,
    )


def slate_table_size(k: int, n: int) -> int:
    """Entries a vanilla agent stores: ``K * C(K-1, N)``."""
    return k * count_slates(k - 1, n)
