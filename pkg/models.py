import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from errors import SynthesisError


class Provenance(BaseModel):
    series: str
    seed: Optional[int] = None
    law: str = "gaussian"
    wavelet: str
    h: Optional[float] = None
    hurst: Optional[str] = None
    j_max: int
    J_grid: int
    window: Tuple[float, float]
    tail_bound: float = 0.0
    blocks: Optional[List[int]] = None
    linear_term: Optional[bool] = None
    # the only field allowed to differ between two identical runs
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def fingerprint(self) -> bytes:
        payload = self.model_dump(exclude={"created_at"})
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()


@dataclass
class SampledPath:
    """Values on t_i = i 2^-J_grid for i = i0, ..., i0 + n - 1."""

    values: np.ndarray
    J_grid: int
    i0: int
    provenance: Provenance

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise SynthesisError("Sampled path contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def step(self) -> float:
        return 2.0 ** -self.J_grid

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.i0, self.i0 + self.n, dtype=np.int64)

    @property
    def times(self) -> np.ndarray:
        return np.ldexp(self.indices.astype(np.float64), -self.J_grid)

    @property
    def window(self) -> Tuple[float, float]:
        return self.i0 * self.step, (self.i0 + self.n - 1) * self.step

    def grid_index(self, t: float) -> int:
        """Position of t in `values`; t must be a grid point of the window."""
        scaled = np.ldexp(t, self.J_grid)
        i = int(round(scaled))
        if i != scaled:
            raise SynthesisError(f"t={t} is not on the 2^-{self.J_grid} grid")
        if not self.i0 <= i < self.i0 + self.n:
            raise SynthesisError(f"t={t} lies outside the sampled window {self.window}")
        return i - self.i0

    def value_at(self, t: float) -> float:
        return float(self.values[self.grid_index(t)])

    def restrict(self, a: float, b: float) -> "SampledPath":
        lo, hi = self.grid_index(a), self.grid_index(b)
        return SampledPath(self.values[lo:hi + 1].copy(), self.J_grid, self.i0 + lo, self.provenance)

    def scaled(self, factor: float) -> "SampledPath":
        return SampledPath(self.values * factor, self.J_grid, self.i0, self.provenance)


@dataclass
class ScaleRow:
    k0: int
    values: np.ndarray
    valid: np.ndarray

    @property
    def k1(self) -> int:
        return self.k0 + self.values.size - 1


@dataclass
class CoefficientArray:
    """
    Wavelet coefficients c_{j,k} (L-infinity normalization) stored as one
    contiguous row of positions per scale.

    `outside` is the value assumed for positions not stored: None means
    unknown (invalid), 0.0 means the series has no coefficient there.
    """

    rows: Dict[int, ScaleRow] = field(default_factory=dict)
    outside: Optional[float] = None
    source: str = "exact"

    def set_row(self, j: int, k0: int, values: np.ndarray, valid: Optional[np.ndarray] = None) -> None:
        values = np.asarray(values, dtype=np.float64)
        if valid is None:
            valid = np.ones(values.shape, dtype=bool)
        self.rows[j] = ScaleRow(int(k0), values, np.asarray(valid, dtype=bool))

    @property
    def scales(self) -> List[int]:
        return sorted(self.rows)

    @property
    def j_max(self) -> int:
        return max(self.rows) if self.rows else -1

    def lookup(self, j: int, ks) -> Tuple[np.ndarray, np.ndarray]:
        """(values, valid) at scale j for the positions ks."""
        ks = np.atleast_1d(np.asarray(ks, dtype=np.int64))
        fill = np.nan if self.outside is None else self.outside
        vals = np.full(ks.shape, fill, dtype=np.float64)
        valid = np.full(ks.shape, self.outside is not None, dtype=bool)
        row = self.rows.get(j)
        if row is not None:
            inside = (ks >= row.k0) & (ks <= row.k1)
            pos = ks[inside] - row.k0
            vals[inside] = row.values[pos]
            valid[inside] = row.valid[pos]
        vals[~valid] = np.nan
        return vals, valid

    def get(self, j: int, k: int) -> float:
        return float(self.lookup(j, [k])[0][0])

    def scaled(self, factor: float) -> "CoefficientArray":
        out = CoefficientArray(outside=None if self.outside is None else self.outside * factor,
                               source=self.source)
        for j, row in self.rows.items():
            out.set_row(j, row.k0, row.values * factor, row.valid.copy())
        return out

    def entries(self) -> Iterator[Tuple[int, int, float]]:
        for j in self.scales:
            row = self.rows[j]
            for offset in np.flatnonzero(row.valid):
                yield j, row.k0 + int(offset), float(row.values[offset])
