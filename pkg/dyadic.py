"""
Dyadic index algebra.

A pair (j, k) names the half-open interval [k 2^-j, (k+1) 2^-j). Positions are
signed; only `locate` is restricted to the unit interval.
"""

import math
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from errors import DomainError


@dataclass(frozen=True, order=True)
class DyadicIndex:
    j: int
    k: int

    def __post_init__(self):
        if self.j < 0:
            raise DomainError(f"Scale must be non-negative, got j={self.j}")

    @property
    def length(self) -> float:
        return 2.0 ** -self.j

    def interval(self) -> Tuple[float, float]:
        step = 2.0 ** -self.j
        return self.k * step, (self.k + 1) * step

    def children(self) -> Tuple["DyadicIndex", "DyadicIndex"]:
        return DyadicIndex(self.j + 1, 2 * self.k), DyadicIndex(self.j + 1, 2 * self.k + 1)

    def parent(self) -> "DyadicIndex":
        if self.j == 0:
            raise DomainError("Scale 0 has no parent")
        return DyadicIndex(self.j - 1, self.k >> 1)


@dataclass(frozen=True)
class NeighborhoodSpec:
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise DomainError(f"Neighborhood radius must be non-negative, got {self.radius}")

    def positions(self, center: int) -> range:
        return range(center - self.radius, center + self.radius + 1)


def locate(t: float, j: int) -> int:
    """k_j(t) = floor(2^j t), the scale-j interval containing t."""
    if not 0.0 <= t < 1.0:
        raise DomainError(f"t must lie in [0, 1), got {t}")
    if j < 0:
        raise DomainError(f"Scale must be non-negative, got j={j}")
    return math.floor(math.ldexp(t, j))


def locate_many(ts: np.ndarray, j: int) -> np.ndarray:
    ts = np.asarray(ts, dtype=np.float64)
    if ts.size and (ts.min() < 0.0 or ts.max() >= 1.0):
        raise DomainError("All points must lie in [0, 1)")
    return np.floor(np.ldexp(ts, j)).astype(np.int64)


def neighborhood(t: float, j: int, radius: int) -> range:
    """kappa_j^t(n): positions within `radius` of k_j(t) at scale j."""
    return NeighborhoodSpec(radius).positions(locate(t, j))


def triple(index: DyadicIndex) -> Tuple[float, float]:
    """3λ: same center as λ, three times longer."""
    step = 2.0 ** -index.j
    return (index.k - 1) * step, (index.k + 2) * step


def descendant_ranges(index: DyadicIndex, j_max: int) -> Iterator[Tuple[int, int, int]]:
    """Yield (j', k_lo, k_hi) (inclusive) for every scale of 3λ between λ.j and j_max."""
    if index.j > j_max:
        raise DomainError(f"j_max={j_max} is coarser than the index scale {index.j}")
    for jp in range(index.j, j_max + 1):
        factor = 1 << (jp - index.j)
        yield jp, (index.k - 1) * factor, (index.k + 2) * factor - 1


def descendants_in_triple(index: DyadicIndex, j_max: int) -> List[DyadicIndex]:
    return [
        DyadicIndex(jp, kp)
        for jp, lo, hi in descendant_ranges(index, j_max)
        for kp in range(lo, hi + 1)
    ]


def descendant_count(index: DyadicIndex, j_max: int) -> int:
    return 3 * ((1 << (j_max - index.j + 1)) - 1)
