"""Brute-force slate-MDP solver used as ground truth.

Both routines enumerate every slate of every state, so they are guarded by
:data:`slatefree.catalog.MAX_STATE_SLATE_PAIRS`.  Deterministic policies are
the exception: :func:`evaluate_deterministic_policy` needs one slate per
state and works at any catalog size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as kern
from .catalog import (
    Catalog,
    CostMode,
    RandomizedPolicy,
    Slate,
    canonical_slate,
    check_capacity,
    rank_slate,
    slate_table,
)
from .errors import ConfigError
from .users import UserModel, choice_distribution, choice_tensor

DEFAULT_THRESHOLD = 1e-12
# relative slack when deciding that two slates tie for the minimum
TIE_TOLERANCE = 1e-10


@dataclass(frozen=True)
class SlateMDP:
    """Dense model: ``probs[s, rank, s']`` and expected ``costs[s, rank]``."""

    k: int
    n: int
    slates: np.ndarray
    probs: np.ndarray
    costs: np.ndarray


@dataclass
class ExactSolution:
    slate_q: np.ndarray
    values: np.ndarray
    optimal_slates: list[Slate] | None
    iterations: int
    final_delta: float
    slates: np.ndarray

    def slate_value(self, s: int, slate: Sequence[int]) -> float:
        return float(self.slate_q[s, rank_slate(slate, self.slate_q.shape[0], s)])

    def bellman_residual(self, mdp: SlateMDP, discount: float) -> float:
        backup = mdp.costs + discount * mdp.probs @ self.values
        return float(np.max(np.abs(backup - self.slate_q)))


def _check_discount(discount: float) -> None:
    if not 0.0 <= discount < 1.0:
        raise ConfigError(f"discount must lie in [0, 1), got {discount}")


def _check_user(catalog: Catalog, user: UserModel) -> None:
    if catalog.size_k != user.k:
        raise ConfigError(f"catalog has K={catalog.size_k}, user model K={user.k}")


def build_slate_mdp(catalog: Catalog, user: UserModel, n: int, cost_mode: CostMode) -> SlateMDP:
    _check_user(catalog, user)
    check_capacity(catalog.size_k, n)
    slates = slate_table(catalog.size_k, n)
    probs = choice_tensor(user, slates)
    costs = np.repeat(catalog.costs[:, None], slates.shape[1], axis=1)
    if CostMode(cost_mode) is CostMode.SLATE:
        inside = np.take_along_axis(probs, slates, axis=2).sum(axis=2)
        costs = costs + catalog.penalty * (1.0 - inside)
    return SlateMDP(catalog.size_k, n, slates, probs, costs)


def _argmin_lowest_rank(row: np.ndarray) -> int:
    best = row.min()
    slack = TIE_TOLERANCE * max(1.0, abs(best))
    return int(np.flatnonzero(row <= best + slack)[0])


def policy_evaluation(
    policy: RandomizedPolicy,
    user: UserModel,
    catalog: Catalog,
    discount: float,
    cost_mode: CostMode = CostMode.STATE,
    method: str = "linear",
    threshold: float = DEFAULT_THRESHOLD,
    mdp: SlateMDP | None = None,
) -> ExactSolution:
    """Exact ``Q_pi(s, w)`` for every slate.

    ``method="linear"`` solves ``(I - discount P_pi) V = c_pi`` and backs up
    once; ``method="iterative"`` runs successive approximation on Q.
    """
    _check_discount(discount)
    if mdp is None:
        mdp = build_slate_mdp(catalog, user, policy.n, cost_mode)
    pi = policy.to_dense()
    if method == "linear":
        p_pi = np.einsum("sm,smt->st", pi, mdp.probs)
        c_pi = np.einsum("sm,sm->s", pi, mdp.costs)
        values = np.linalg.solve(np.eye(mdp.k) - discount * p_pi, c_pi)
        slate_q = mdp.costs + discount * mdp.probs @ values
        values = np.einsum("sm,sm->s", pi, slate_q)
        delta = float(np.max(np.abs(slate_q - (mdp.costs + discount * mdp.probs @ values))))
        iterations = 1
    elif method == "iterative":
        stop = threshold * (1.0 - discount) / discount if discount > 0 else np.inf
        slate_q = mdp.costs.copy()
        iterations = 0
        while True:
            values = np.einsum("sm,sm->s", pi, slate_q)
            new_q = mdp.costs + discount * mdp.probs @ values
            delta = float(np.max(np.abs(new_q - slate_q)))
            slate_q = new_q
            iterations += 1
            if delta <= stop or iterations >= 100_000:
                break
        values = np.einsum("sm,sm->s", pi, slate_q)
    else:
        raise ConfigError(f"unknown evaluation method {method!r}")
    return ExactSolution(slate_q, values, None, iterations, delta, mdp.slates)


def value_iteration(
    user: UserModel,
    catalog: Catalog,
    n: int,
    discount: float,
    cost_mode: CostMode = CostMode.STATE,
    threshold: float = DEFAULT_THRESHOLD,
    max_iterations: int = 100_000,
    mdp: SlateMDP | None = None,
    deltas: list | None = None,
) -> ExactSolution:
    """Optimal slate values; ties in the argmin go to the lowest slate rank.

    Stops once the sup-norm change drops below
    ``threshold * (1 - discount) / discount``, so ``|V - V*| <= threshold``.
    Per-sweep deltas are appended to ``deltas`` when given.
    """
    _check_discount(discount)
    if threshold <= 0:
        raise ConfigError("threshold must be positive")
    if mdp is None:
        mdp = build_slate_mdp(catalog, user, n, cost_mode)
    stop = threshold * (1.0 - discount) / discount if discount > 0 else np.inf
    values = np.zeros(mdp.k)
    iterations = 0
    while True:
        slate_q = mdp.costs + discount * mdp.probs @ values
        new_values = slate_q.min(axis=1)
        delta = float(np.max(np.abs(new_values - values)))
        values = new_values
        iterations += 1
        if deltas is not None:
            deltas.append(delta)
        # delta == 0 covers sweeps stuck at round-off
        if delta <= stop or delta == 0.0 or iterations >= max_iterations:
            break
    slate_q = mdp.costs + discount * mdp.probs @ values
    values = slate_q.min(axis=1)
    optimal = [tuple(int(i) for i in mdp.slates[s, _argmin_lowest_rank(slate_q[s])]) for s in range(mdp.k)]
    return ExactSolution(slate_q, values, optimal, iterations, delta, mdp.slates)


def evaluate_deterministic_policy(
    slates: Sequence[Sequence[int]],
    user: UserModel,
    catalog: Catalog,
    discount: float,
    cost_mode: CostMode = CostMode.STATE,
) -> np.ndarray:
    """Values of the policy recommending ``slates[s]`` at state ``s``."""
    _check_discount(discount)
    _check_user(catalog, user)
    k = catalog.size_k
    transition = np.empty((k, k))
    costs = catalog.costs.copy()
    slate_cost = CostMode(cost_mode) is CostMode.SLATE
    for s in range(k):
        slate = canonical_slate(slates[s], k, s)
        transition[s] = choice_distribution(user, s, slate)
        if slate_cost:
            costs[s] += catalog.penalty * (1.0 - transition[s, list(slate)].sum())
    return np.linalg.solve(np.eye(k) - discount * transition, costs)


def greedy_slates_of_item_table(item_q: np.ndarray, n: int) -> list[Slate]:
    """Per state, the ``n`` items with the smallest values (ties to lower ids)."""
    item_q = np.asarray(item_q, dtype=np.float64)
    k = item_q.shape[0]
    out = np.empty(n, dtype=np.int64)
    taken = np.empty(k, dtype=np.bool_)
    slates = []
    for s in range(k):
        kern.greedy_items(item_q[s], s, n, out, taken)
        slates.append(tuple(int(i) for i in out))
    return slates


def greedy_slates_of_slate_table(slate_q: np.ndarray, slates: np.ndarray) -> list[Slate]:
    """Per state, the slate with the smallest value (ties to lower rank)."""
    return [
        tuple(int(i) for i in slates[s, kern.argmin_first(slate_q[s])])
        for s in range(slate_q.shape[0])
    ]


def evaluate_policy_of_item_table(
    item_q: np.ndarray,
    user: UserModel,
    catalog: Catalog,
    n: int,
    discount: float,
    cost_mode: CostMode = CostMode.STATE,
) -> np.ndarray:
    """Exact values of the greedy top-``n`` policy read off an item table."""
    slates = greedy_slates_of_item_table(item_q, n)
    return evaluate_deterministic_policy(slates, user, catalog, discount, cost_mode)
