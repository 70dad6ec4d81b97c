"""Synthetic Markovian users: exact choice distribution and sampling.

* ``user1``: with probability ``alpha`` pick a slate item uniformly,
  otherwise pick any of the K catalog items uniformly.
* ``user2``: like ``user1`` but never picks items of the excluded set X.
  A slate made only of X items sends all mass to the library branch.
* ``user3``: picks a slate item uniformly if the slate holds at least one
  item of the required set Y; otherwise picks from the catalog (all K items,
  or the items outside Y when ``reject_full_catalog`` is false).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as kern
from .catalog import Catalog, CostMode, RandomizedPolicy, canonical_slate
from .errors import ConfigError


class UserVariant(str, enum.Enum):
    USER1 = "user1"
    USER2 = "user2"
    USER3 = "user3"

    @property
    def code(self) -> int:
        return {"user1": kern.USER1, "user2": kern.USER2, "user3": kern.USER3}[self.value]


@dataclass(frozen=True)
class UserModel:
    variant: UserVariant
    k: int
    alpha: float = 1.0
    excluded_set: frozenset[int] = frozenset()
    required_set: frozenset[int] = frozenset()
    reject_full_catalog: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", UserVariant(self.variant))
        object.__setattr__(self, "excluded_set", frozenset(int(i) for i in self.excluded_set))
        object.__setattr__(self, "required_set", frozenset(int(i) for i in self.required_set))
        if self.k < 2:
            raise ConfigError("user model needs a catalog of at least two items")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name, items in (("excluded", self.excluded_set), ("required", self.required_set)):
            if any(not 0 <= i < self.k for i in items):
                raise ConfigError(f"{name} set has items outside [0, {self.k})")
        if self.variant is UserVariant.USER2 and len(self.excluded_set) >= self.k:
            raise ConfigError("user2 excludes the whole catalog")
        if self.variant is UserVariant.USER3:
            if not self.required_set:
                raise ConfigError("user3 needs a non-empty required set")
            if not self.reject_full_catalog and len(self.required_set) >= self.k:
                raise ConfigError("user3 rejection branch has no items to choose from")

    @classmethod
    def user1(cls, k: int, alpha: float):
        return cls(UserVariant.USER1, k, alpha)

    @classmethod
    def user2(cls, k: int, alpha: float, excluded: Sequence[int]):
        return cls(UserVariant.USER2, k, alpha, excluded_set=frozenset(excluded))

    @classmethod
    def user3(cls, k: int, required: Sequence[int], reject_full_catalog: bool = True):
        return cls(
            UserVariant.USER3,
            k,
            required_set=frozenset(required),
            reject_full_catalog=reject_full_catalog,
        )

    # arrays consumed by the kernels
    @property
    def xmask(self) -> np.ndarray:
        mask = np.zeros(self.k, dtype=np.bool_)
        mask[list(self.excluded_set)] = True
        return mask

    @property
    def ymask(self) -> np.ndarray:
        mask = np.zeros(self.k, dtype=np.bool_)
        mask[list(self.required_set)] = True
        return mask

    def kernel_args(self) -> tuple:
        return (self.variant.code, float(self.alpha), self.xmask, self.ymask, self.reject_full_catalog)

    def choice_distribution(self, s: int, slate: Sequence[int]) -> np.ndarray:
        return choice_distribution(self, s, slate)


def choice_distribution(model: UserModel, s: int, slate: Sequence[int]) -> np.ndarray:
    """Length-K vector ``P[s' | s, slate]``."""
    slate = np.asarray(canonical_slate(slate, model.k, s), dtype=np.int64)
    out = np.empty(model.k)
    kern.choice_probs(*model.kernel_args(), s, slate, out)
    return out


def sample_next_state(model: UserModel, s: int, slate: Sequence[int], rng: np.random.Generator) -> int:
    return int(kern.sample_index(choice_distribution(model, s, slate), rng))


def choice_tensor(model: UserModel, slates: np.ndarray) -> np.ndarray:
    """``P[s, rank, s']`` for a slate table of shape ``(K, M, N)``."""
    k, m, _ = slates.shape
    out = np.empty((k, m, k))
    args = model.kernel_args()
    for s in range(k):
        for r in range(m):
            kern.choice_probs(*args, s, slates[s, r], out[s, r])
    return out


def rejection_probability(probs: np.ndarray, slate: Sequence[int]) -> float:
    """Probability that the next state falls outside the slate."""
    return float(1.0 - sum(probs[j] for j in slate))


def expected_slate_cost(
    catalog: Catalog, model: UserModel, cost_mode: CostMode, s: int, slate: Sequence[int]
) -> float:
    """``c(s, w)``: state cost plus the expected rejection penalty in slate mode."""
    cost = catalog.base_costs[s]
    if CostMode(cost_mode) is CostMode.SLATE:
        probs = choice_distribution(model, s, slate)
        cost += catalog.penalty * rejection_probability(probs, slate)
    return cost


def transition_matrix_for_policy(model: UserModel, policy: RandomizedPolicy) -> np.ndarray:
    """Row ``s`` is ``sum_w pi_s(w) P[. | s, w]``."""
    if policy.k != model.k:
        raise ConfigError("policy and user model disagree on K")
    matrix = np.zeros((model.k, model.k))
    for s, pairs in enumerate(policy.support):
        for slate, prob in pairs:
            matrix[s] += prob * choice_distribution(model, s, slate)
    return matrix
