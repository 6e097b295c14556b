"""
Seed-keyed coefficient lattices.

Every variate xi_{j,k} is a pure function of (seed, law, j, k): the 64-bit key is
mixed with a splitmix64 finalizer, turned into a uniform in (0, 1) and, for the
Gaussian law, pushed through the inverse normal CDF. Nothing is drawn from a
stream, so any window of the lattice can be read in any order.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import ndtri

from errors import DomainError

logger = logging.getLogger(__name__)

Law = Literal["gaussian", "uniform"]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_AUX_DOMAIN = np.uint64(0xD1B54A32D192ED03)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def zigzag(ks: np.ndarray) -> np.ndarray:
    """Map signed positions to unsigned keys: 0, -1, 1, -2, ... -> 0, 1, 2, 3, ..."""
    ks = np.asarray(ks, dtype=np.int64)
    return ((ks << np.int64(1)) ^ (ks >> np.int64(63))).view(np.uint64)


def parse_seed(value: Union[int, str]) -> int:
    if isinstance(value, str):
        text = value.strip().lower()
        value = int(text, 16) if text.startswith("0x") else int(text)
    if value < 0 or value > _MASK64:
        raise DomainError(f"Seed must fit in 64 unsigned bits, got {value}")
    return int(value)


def _to_unit(bits: np.ndarray) -> np.ndarray:
    # 53 high bits, shifted by half a step so 0 and 1 are never produced
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


class CoefficientLattice:
    """Infinite i.i.d. family xi_{j,k}, j >= 0, k in Z."""

    def __init__(self, seed: Union[int, str], law: Law = "gaussian"):
        if law not in ("gaussian", "uniform"):
            raise DomainError(f"Unknown law '{law}'")
        self.seed = parse_seed(seed)
        self.law = law
        self._key = _splitmix64(np.array([self.seed], dtype=np.uint64))[0]

    def __repr__(self) -> str:
        return f"CoefficientLattice(seed={self.seed:#x}, law='{self.law}')"

    def _bits(self, j: int, ks: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            level = _splitmix64(np.array([self._key ^ np.uint64(j)], dtype=np.uint64))[0]
            return _splitmix64(zigzag(ks) ^ level)

    def _transform(self, bits: np.ndarray) -> np.ndarray:
        u = _to_unit(bits)
        if self.law == "gaussian":
            return ndtri(u)
        return 2.0 * u - 1.0

    def values(self, j: int, ks) -> np.ndarray:
        if j < 0:
            raise DomainError(f"Scale must be non-negative, got j={j}")
        ks = np.atleast_1d(np.asarray(ks, dtype=np.int64))
        return self._transform(self._bits(j, ks))

    def value(self, j: int, k: int) -> float:
        return float(self.values(j, [k])[0])

    def _aux_bits(self, slot: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            bits = _splitmix64(np.array([self._key ^ _AUX_DOMAIN], dtype=np.uint64) + np.uint64(slot))
        return _splitmix64(bits)

    def auxiliary(self, slot: int) -> float:
        """A variate outside the (j, k) lattice, keyed by (seed, slot)."""
        return float(self._transform(self._aux_bits(slot))[0])

    def auxiliary_uniform(self, slot: int) -> float:
        return float(_to_unit(self._aux_bits(slot))[0])


@dataclass
class SparseLattice:
    """Deterministic field: explicit values at a few (j, k), zero elsewhere."""

    entries: Dict[Tuple[int, int], float] = field(default_factory=dict)
    aux: float = 0.0
    law: str = "sparse"
    seed: int = 0

    @classmethod
    def zeros(cls) -> "SparseLattice":
        return cls()

    @classmethod
    def single(cls, j: int, k: int, value: float = 1.0) -> "SparseLattice":
        return cls({(j, k): value})

    def values(self, j: int, ks) -> np.ndarray:
        ks = np.atleast_1d(np.asarray(ks, dtype=np.int64))
        out = np.zeros(ks.shape, dtype=np.float64)
        for (jj, kk), v in self.entries.items():
            if jj == j:
                out[ks == kk] = v
        return out

    def value(self, j: int, k: int) -> float:
        return float(self.entries.get((j, k), 0.0))

    def auxiliary(self, slot: int) -> float:
        return self.aux

    def auxiliary_uniform(self, slot: int) -> float:
        return 0.5


CoefficientField = Union[CoefficientLattice, SparseLattice]


class EnvelopeEstimate(BaseModel):
    c2_hat: float = Field(ge=0.0)
    j_max: int
    k_lo: int
    k_hi: int
    argmax_j: int
    argmax_k: int


def envelope(lattice: CoefficientField, j_max: int, k_window: Tuple[int, int]) -> EnvelopeEstimate:
    """Smallest c with |xi_{j,k}| <= c sqrt(log(3 + j + |k|)) over j <= j_max, k in the window."""
    k_lo, k_hi = k_window
    if j_max < 1:
        raise DomainError(f"j_max must be at least 1, got {j_max}")
    if k_hi < k_lo:
        raise DomainError("Empty position window")

    ks = np.arange(k_lo, k_hi + 1, dtype=np.int64)
    best, where = 0.0, (0, k_lo)
    for j in range(0, j_max + 1):
        ratios = np.abs(lattice.values(j, ks)) / np.sqrt(np.log(3.0 + j + np.abs(ks)))
        i = int(np.argmax(ratios))
        if ratios[i] > best:
            best, where = float(ratios[i]), (j, int(ks[i]))
    logger.debug("Envelope over j<=%d, k in [%d, %d]: %.4f at %s", j_max, k_lo, k_hi, best, where)
    return EnvelopeEstimate(
        c2_hat=best, j_max=j_max, k_lo=k_lo, k_hi=k_hi, argmax_j=where[0], argmax_k=where[1]
    )


def draw_points(lattice: CoefficientField, count: int, slot_offset: int = 0) -> np.ndarray:
    """Seed-keyed uniform points of (0, 1), reproducible for a given lattice."""
    return np.array([lattice.auxiliary_uniform(slot_offset + i) for i in range(count)])
