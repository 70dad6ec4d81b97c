"""Per-item marginals of a slate policy and numeric checks of the decomposition.

For a randomised policy ``pi`` at state ``s``:

* item frequency     ``r[s, j]   = sum_{w ∋ j} pi_s(w)``
* item transition    ``P[s'|s,j] = sum_{w ∋ j} pi_s(w) P[s'|s,w] / r[s, j]``
* item cost          ``c(s, j)   = sum_{w ∋ j} pi_s(w) c(s,w) / r[s, j]``
* state-item value   ``Q(s, j)   = sum_{w ∋ j} pi_s(w) Q(s,w) / r[s, j]``

Quantities with ``r[s, j] = 0`` are undefined and carried as NaN together
with an explicit mask.  The ``verify_*`` functions return residuals of the
item-level Bellman systems against the brute-force slate solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, CostMode, RandomizedPolicy, rank_slate
from .errors import UndefinedMarginalError
from .exact import (
    ExactSolution,
    build_slate_mdp,
    greedy_slates_of_item_table,
    policy_evaluation,
    value_iteration,
)
from .users import UserModel, choice_distribution, expected_slate_cost


@dataclass
class ItemMarginals:
    frequencies: np.ndarray
    item_transitions: np.ndarray
    item_costs: np.ndarray
    defined_mask: np.ndarray


def item_frequencies(policy: RandomizedPolicy) -> np.ndarray:
    freq = np.zeros((policy.k, policy.k))
    for s, pairs in enumerate(policy.support):
        for slate, prob in pairs:
            freq[s, list(slate)] += prob
    return freq


def _frequency(policy: RandomizedPolicy, s: int, j: int) -> float:
    r = math.fsum(p for w, p in policy.support[s] if j in w)
    if r <= 0.0:
        raise UndefinedMarginalError(f"item {j} is never recommended at state {s}")
    return r


def joint_item_mass(policy: RandomizedPolicy, user: UserModel, s: int, j: int) -> np.ndarray:
    """``sum_{w ∋ j} pi_s(w) P[. | s, w]`` (unnormalised)."""
    mass = np.zeros(policy.k)
    for slate, prob in policy.support[s]:
        if j in slate:
            mass += prob * choice_distribution(user, s, slate)
    return mass


def item_transition(policy: RandomizedPolicy, user: UserModel, s: int, j: int) -> np.ndarray:
    """``P^pi[. | s, j]``; raises :class:`UndefinedMarginalError` if ``r[s, j] = 0``."""
    r = _frequency(policy, s, j)
    return joint_item_mass(policy, user, s, j) / r


def item_transition_by_conditioning(
    policy: RandomizedPolicy, user: UserModel, s: int, j: int
) -> np.ndarray:
    """``P[s' | s, w ∋ j]`` from the joint law of (slate, next state).

    Normalises by the joint's own total mass instead of the item frequency.
    """
    _frequency(policy, s, j)
    joint = np.array(
        [prob * choice_distribution(user, s, slate) for slate, prob in policy.support[s] if j in slate]
    )
    return joint.sum(axis=0) / joint.sum()


def item_costs(
    policy: RandomizedPolicy,
    catalog: Catalog,
    cost_mode: CostMode,
    s: int,
    j: int,
    user: UserModel | None = None,
) -> float:
    """Marginal item cost ``c^pi(s, j)``; slate mode needs the user model."""
    r = _frequency(policy, s, j)
    if CostMode(cost_mode) is CostMode.STATE:
        return catalog.base_costs[s]
    if user is None:
        raise ValueError("slate-dependent costs need the user model")
    weighted = math.fsum(
        prob * expected_slate_cost(catalog, user, cost_mode, s, slate)
        for slate, prob in policy.support[s]
        if j in slate
    )
    return weighted / r


def item_marginals(
    policy: RandomizedPolicy, user: UserModel, catalog: Catalog, cost_mode: CostMode
) -> ItemMarginals:
    k = policy.k
    freq = item_frequencies(policy)
    mask = freq > 0.0
    trans = np.full((k, k, k), np.nan)
    costs = np.full((k, k), np.nan)
    for s in range(k):
        for j in np.flatnonzero(mask[s]):
            trans[s, j] = item_transition(policy, user, s, int(j))
            costs[s, j] = item_costs(policy, catalog, cost_mode, s, int(j), user)
    return ItemMarginals(freq, trans, costs, mask)


def state_item_q(policy: RandomizedPolicy, slate_q: np.ndarray) -> np.ndarray:
    """Item table from a dense slate table; undefined entries are NaN."""
    k = policy.k
    weighted = np.zeros((k, k))
    freq = item_frequencies(policy)
    for s, pairs in enumerate(policy.support):
        for slate, prob in pairs:
            weighted[s, list(slate)] += prob * slate_q[s, rank_slate(slate, k, s)]
    with np.errstate(invalid="ignore", divide="ignore"):
        table = np.where(freq > 0.0, weighted / freq, np.nan)
    return table


def _item_bellman_residual(
    item_q: np.ndarray, marg: ItemMarginals, discount: float, n: int
) -> float:
    k = item_q.shape[0]
    # r Q with undefined entries contributing zero
    rq = np.where(marg.defined_mask, marg.frequencies * np.nan_to_num(item_q), 0.0)
    next_values = rq.sum(axis=1) / n
    worst = 0.0
    for s in range(k):
        for j in np.flatnonzero(marg.defined_mask[s]):
            rhs = marg.item_costs[s, j] + discount * marg.item_transitions[s, j] @ next_values
            worst = max(worst, abs(item_q[s, j] - rhs))
    return float(worst)


def verify_theorem1(
    policy: RandomizedPolicy,
    user: UserModel,
    catalog: Catalog,
    discount: float,
    cost_mode: CostMode = CostMode.STATE,
) -> float:
    """Max residual of the item-level policy-evaluation equations.

    ``Q(s,j) = c(s,j) + discount sum_s' P[s'|s,j] (1/N) sum_k r[s',k] Q(s',k)``
    over every defined pair, with ``Q(s, w)`` from the exact linear solve.
    """
    solution = policy_evaluation(policy, user, catalog, discount, cost_mode)
    marg = item_marginals(policy, user, catalog, cost_mode)
    table = state_item_q(policy, solution.slate_q)
    return _item_bellman_residual(table, marg, discount, policy.n)


def lemma3_residual(
    policy: RandomizedPolicy,
    user: UserModel,
    catalog: Catalog,
    discount: float,
    cost_mode: CostMode = CostMode.STATE,
) -> float:
    """``max |Q(s, j) - V(s)|`` over slate items of a deterministic policy."""
    if not policy.is_deterministic:
        raise ValueError("the identity only holds for deterministic policies")
    solution = policy_evaluation(policy, user, catalog, discount, cost_mode)
    table = state_item_q(policy, solution.slate_q)
    worst = 0.0
    for s, ((slate, _),) in enumerate(policy.support):
        worst = max(worst, float(np.max(np.abs(table[s, list(slate)] - solution.values[s]))))
    return worst


def optimal_item_q(solution: ExactSolution) -> np.ndarray:
    """Item table of the optimal policy, completed off the optimal slate.

    For ``l`` outside ``w*(s)`` the frequency is zero, so any convex
    combination of slate values is admissible.  We take the limit of a
    policy putting vanishing mass on the best slate containing ``l``, i.e.
    ``Q(s, l) = min_{w ∋ l} Q*(s, w)``; the diagonal stays NaN.
    """
    slates = solution.slates
    k, m, _ = slates.shape
    table = np.full((k, k), np.inf)
    for s in range(k):
        for r in range(m):
            for j in slates[s, r]:
                table[s, j] = min(table[s, j], solution.slate_q[s, r])
        table[s, s] = np.nan
    return table


@dataclass
class Theorem2Report:
    residual: float
    slate_spread: float
    value_gap: float
    greedy_matches: list[bool]
    unique_optimum: list[bool]
    solution: ExactSolution

    @property
    def all_match(self) -> bool:
        return all(self.greedy_matches)


def verify_theorem2(
    user: UserModel,
    catalog: Catalog,
    n: int,
    discount: float,
    cost_mode: CostMode = CostMode.STATE,
    tie_gap: float = 1e-9,
) -> Theorem2Report:
    """Check the item-level optimality system under the optimal policy.

    ``residual``: max over ``j`` in ``w*(s)`` of
    ``|Q(s,j) - c*(s,j) - discount sum_s' P*[s'|s,j] min_l Q(s',l)|``.
    ``slate_spread``: max spread of ``Q(s, j)`` across ``j`` in ``w*(s)``.
    ``value_gap``: ``max_s |min_l Q(s, l) - V*(s)|``.
    ``greedy_matches[s]``: the ``n`` smallest entries of row ``s`` form the
    brute-force optimal slate.  ``unique_optimum[s]`` is false when another
    slate comes within ``tie_gap`` of the optimum.
    """
    mdp = build_slate_mdp(catalog, user, n, cost_mode)
    solution = value_iteration(user, catalog, n, discount, cost_mode, mdp=mdp)
    policy = RandomizedPolicy.deterministic(catalog.size_k, solution.optimal_slates)
    marg = item_marginals(policy, user, catalog, cost_mode)
    table = optimal_item_q(solution)
    on_slate = state_item_q(policy, solution.slate_q)

    next_values = np.nanmin(table, axis=1)
    residual = 0.0
    spread = 0.0
    matches = []
    unique = []
    greedy = greedy_slates_of_item_table(np.nan_to_num(table, nan=np.inf), n)
    for s, slate in enumerate(solution.optimal_slates):
        items = list(slate)
        for j in items:
            rhs = marg.item_costs[s, j] + discount * marg.item_transitions[s, j] @ next_values
            residual = max(residual, abs(on_slate[s, j] - rhs))
        spread = max(spread, float(np.ptp(on_slate[s, items])))
        matches.append(greedy[s] == slate)
        row = np.sort(solution.slate_q[s])
        unique.append(row.shape[0] < 2 or row[1] - row[0] > tie_gap)
    value_gap = float(np.max(np.abs(next_values - solution.values)))
    return Theorem2Report(float(residual), spread, value_gap, matches, unique, solution)


def property1_residual(policy: RandomizedPolicy, user: UserModel, s: int, j: int) -> float:
    """``sum_w pi 1(j∈w) P[.|s,w]`` against ``r[s,j] P^pi[.|s,j]`` (conditioning route)."""
    lhs = joint_item_mass(policy, user, s, j)
    rhs = item_frequencies(policy)[s, j] * item_transition_by_conditioning(policy, user, s, j)
    return float(np.max(np.abs(lhs - rhs)))


def verify_property3(policy: RandomizedPolicy, user: UserModel, s: int, j: int) -> float:
    """Item transition against its mixture form with weights ``pi_s(w) / r[s,j]``."""
    direct = item_transition(policy, user, s, j)
    r = _frequency(policy, s, j)
    mixture = np.zeros(policy.k)
    for slate, prob in policy.support[s]:
        if j in slate:
            mixture += choice_distribution(user, s, slate) * (prob / r)
    return float(np.max(np.abs(direct - mixture)))
