"""Catalog, slates, slate combinatorics and policy representations.

States are item ids ``0..K-1`` (the currently viewed item).  A slate is an
unordered set of ``N`` distinct items that never contains the current state;
its canonical form is the ascending tuple of ids.  Slates available at a
state are ranked lexicographically, which gives dense per-state indexing for
tables holding one value per (state, slate).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, DomainError

DEFAULT_BASE_COST = 20.0
COST_NOISE_HIGH = 4.0
# Oracle refuses instances with more (state, slate) pairs than this.
MAX_STATE_SLATE_PAIRS = 10**6

Slate = tuple[int, ...]


class CostMode(str, enum.Enum):
    """How the per-step cost depends on the action.

    ``STATE``: ``c(s, w) = c(s)``.
    ``SLATE``: ``c(s, w) = c(s) + penalty * 1(user rejects w)``; the exact
    solver uses the expectation of the rejection indicator.
    """

    STATE = "state"
    SLATE = "slate"


@dataclass(frozen=True)
class Catalog:
    size_k: int
    base_costs: tuple[float, ...]
    cost_seed: int
    penalty: float = 0.0

    def __post_init__(self):
        if self.size_k < 2:
            raise ConfigError("catalog needs at least two items")
        if len(self.base_costs) != self.size_k:
            raise ConfigError(
                f"expected {self.size_k} base costs, got {len(self.base_costs)}"
            )
        if any(not math.isfinite(c) or c < 0 for c in self.base_costs):
            raise ConfigError("base costs must be finite and non-negative")
        if not math.isfinite(self.penalty) or self.penalty < 0:
            raise ConfigError("penalty must be finite and non-negative")

    @property
    def costs(self) -> np.ndarray:
        return np.asarray(self.base_costs, dtype=np.float64)


def build_catalog(
    k: int,
    low_cost_overrides: Iterable[tuple[int, float]] = (),
    cost_seed: int = 0,
    penalty: float = 0.0,
) -> Catalog:
    """Draw per-item costs ``base_i + z_i`` with ``z_i ~ Uniform(0, 4)``.

    ``base_i`` is 20 unless overridden.  The noise is drawn once per item, in
    id order, from a generator seeded with ``cost_seed``.
    """
    if k < 2:
        raise ConfigError("catalog needs at least two items")
    base = [DEFAULT_BASE_COST] * k
    seen: set[int] = set()
    for item, value in low_cost_overrides:
        item = int(item)
        if item in seen:
            raise ConfigError(f"duplicate cost override for item {item}")
        if not 0 <= item < k:
            raise ConfigError(f"cost override item {item} outside [0, {k})")
        seen.add(item)
        base[item] = float(value)
    noise = np.random.default_rng(cost_seed).uniform(0.0, COST_NOISE_HIGH, size=k)
    costs = tuple(float(b + z) for b, z in zip(base, noise))
    return Catalog(size_k=k, base_costs=costs, cost_seed=cost_seed, penalty=float(penalty))


# --------------------------------------------------------------------------
# slate combinatorics


def count_slates(k: int, n: int) -> int:
    """Exact binomial coefficient ``C(k, n)``."""
    if n < 0 or k < 0 or n > k:
        raise DomainError(f"need 0 <= n <= k, got k={k}, n={n}")
    return math.comb(k, n)


def _check_slate_args(k: int, excluded: int, n: int) -> None:
    if not 0 <= excluded < k:
        raise DomainError(f"excluded state {excluded} outside [0, {k})")
    if not 1 <= n <= k - 1:
        raise DomainError(f"slate size must satisfy 1 <= n <= k-1, got n={n}, k={k}")


def canonical_slate(items: Iterable[int], k: int, excluded: int | None = None) -> Slate:
    """Validate ``items`` and return the sorted tuple."""
    slate = tuple(sorted(int(i) for i in items))
    if not slate:
        raise DomainError("empty slate")
    if len(set(slate)) != len(slate):
        raise DomainError(f"slate {slate} has duplicate items")
    if slate[0] < 0 or slate[-1] >= k:
        raise DomainError(f"slate {slate} has items outside [0, {k})")
    if excluded is not None and excluded in slate:
        raise DomainError(f"slate {slate} contains the current state {excluded}")
    return slate


def enumerate_slates(k: int, excluded: int, n: int) -> list[Slate]:
    """All ``C(k-1, n)`` slates over ``[0, k) minus {excluded}`` in lex order."""
    _check_slate_args(k, excluded, n)
    candidates = [i for i in range(k) if i != excluded]
    return list(itertools.combinations(candidates, n))


def rank_slate(slate: Sequence[int], k: int, excluded: int) -> int:
    """Lexicographic rank of ``slate`` among the slates available at ``excluded``."""
    slate = canonical_slate(slate, k, excluded)
    n = len(slate)
    _check_slate_args(k, excluded, n)
    m = k - 1
    # compress ids so that the excluded state disappears
    compressed = [i - 1 if i > excluded else i for i in slate]
    colex = sum(math.comb(m - 1 - c, n - pos) for pos, c in enumerate(compressed))
    return math.comb(m, n) - 1 - colex


def unrank_slate(rank: int, k: int, excluded: int, n: int) -> Slate:
    """Inverse of :func:`rank_slate`."""
    _check_slate_args(k, excluded, n)
    m = k - 1
    total = math.comb(m, n)
    if not 0 <= rank < total:
        raise DomainError(f"rank {rank} outside [0, {total})")
    remaining = total - 1 - rank
    compressed = []
    upper = m
    for i in range(n, 0, -1):
        d = upper - 1
        while math.comb(d, i) > remaining:
            d -= 1
        remaining -= math.comb(d, i)
        compressed.append(m - 1 - d)
        upper = d
    return tuple(c + 1 if c >= excluded else c for c in compressed)


def check_capacity(k: int, n: int) -> int:
    """Return the number of (state, slate) pairs or raise :class:`CapacityError`."""
    pairs = k * count_slates(k - 1, n)
    if pairs > MAX_STATE_SLATE_PAIRS:
        raise CapacityError(
            f"K={k}, N={n} has {pairs} state-slate pairs "
            f"(limit {MAX_STATE_SLATE_PAIRS})"
        )
    return pairs


def slate_table(k: int, n: int) -> np.ndarray:
    """Array ``T[s, rank]`` of slate items, shape ``(k, C(k-1, n), n)``."""
    check_capacity(k, n)
    base = np.array(list(itertools.combinations(range(k - 1), n)), dtype=np.int64)
    base = base.reshape(-1, n)
    table = np.empty((k,) + base.shape, dtype=np.int64)
    for s in range(k):
        table[s] = np.where(base >= s, base + 1, base)
    return table


# --------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class RandomizedPolicy:
    """Stationary randomised slate policy: per state a list of (slate, prob)."""

    k: int
    n: int
    support: tuple[tuple[tuple[Slate, float], ...], ...]
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.support) != self.k:
            raise ConfigError(f"policy needs {self.k} states, got {len(self.support)}")
        index = []
        for s, pairs in enumerate(self.support):
            if not pairs:
                raise ConfigError(f"state {s} has empty support")
            seen = {}
            for slate, prob in pairs:
                try:
                    ok = tuple(slate) == canonical_slate(slate, self.k, s)
                except DomainError as exc:
                    raise ConfigError(f"state {s}: {exc}") from None
                if not ok or len(slate) != self.n:
                    raise ConfigError(f"state {s}: invalid slate {slate}")
                if slate in seen:
                    raise ConfigError(f"state {s}: duplicate slate {slate}")
                if not prob >= 0:
                    raise ConfigError(f"state {s}: negative probability {prob}")
                seen[slate] = prob
            total = math.fsum(seen.values())
            if abs(total - 1.0) > 1e-12:
                raise ConfigError(f"state {s}: probabilities sum to {total!r}")
            index.append(seen)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_mapping(cls, k: int, n: int, support: Sequence[dict[Slate, float]]):
        try:
            pairs = tuple(
                tuple((canonical_slate(w, k, s), float(p)) for w, p in row.items())
                for s, row in enumerate(support)
            )
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(k, n, pairs)

    @classmethod
    def deterministic(cls, k: int, slates: Sequence[Sequence[int]]):
        slates = [canonical_slate(w, k, s) for s, w in enumerate(slates)]
        n = len(slates[0])
        return cls(k, n, tuple(((w, 1.0),) for w in slates))

    @classmethod
    def uniform(cls, k: int, n: int):
        support = [
            _normalised({w: 1.0 for w in enumerate_slates(k, s, n)}) for s in range(k)
        ]
        return cls.from_mapping(k, n, support)

    @classmethod
    def random(
        cls,
        k: int,
        n: int,
        rng: np.random.Generator,
        max_support: int = 10,
        concentration: float = 1.0,
    ):
        """Random policy: per state up to ``max_support`` slates, Dirichlet weights."""
        support = []
        for s in range(k):
            total = count_slates(k - 1, n)
            size = int(rng.integers(1, min(max_support, total) + 1))
            ranks = rng.choice(total, size=size, replace=False)
            weights = rng.dirichlet(np.full(size, concentration))
            row = {unrank_slate(int(r), k, s, n): float(w) for r, w in zip(ranks, weights)}
            support.append(_normalised(row))
        return cls.from_mapping(k, n, support)

    def slates(self, s: int) -> dict[Slate, float]:
        return dict(self._index[s])

    def prob(self, s: int, slate: Sequence[int]) -> float:
        return self._index[s].get(tuple(slate), 0.0)

    @property
    def is_deterministic(self) -> bool:
        return all(len(pairs) == 1 for pairs in self.support)

    def to_dense(self) -> np.ndarray:
        """Probabilities as a ``(k, C(k-1, n))`` array indexed by slate rank."""
        check_capacity(self.k, self.n)
        dense = np.zeros((self.k, count_slates(self.k - 1, self.n)))
        for s, pairs in enumerate(self.support):
            for slate, prob in pairs:
                dense[s, rank_slate(slate, self.k, s)] = prob
        return dense


def _normalised(row: dict) -> dict:
    total = math.fsum(row.values())
    row = {w: p / total for w, p in row.items()}
    # push the residual rounding error onto the largest entry
    drift = 1.0 - math.fsum(row.values())
    if drift:
        top = max(row, key=row.get)
        row[top] += drift
    return row


# --------------------------------------------------------------------------
# item-level tables


def new_item_table(k: int, init: float = 0.0) -> np.ndarray:
    """``k x k`` state-item table; the diagonal is never read."""
    return np.full((k, k), float(init))


def valid_item_mask(k: int) -> np.ndarray:
    return ~np.eye(k, dtype=bool)
