"""
Sample-path synthesis for random wavelet series.

Every series is evaluated by the same engine: for each scale j (ascending) and
each grid point, the terms xi_{j,k} 2^{-e(j,k) j} psi(2^j t - k) are added in
ascending k with Kahan compensation, and scales are then combined in ascending
order with the same compensation. The per-point order never depends on how the
grid is chunked across workers.
"""

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from errors import DomainError, SynthesisError
from models import CoefficientArray, Provenance, SampledPath
from randomness import CoefficientField
from wavelets import MAX_RESOLUTION, WaveletSpec, wavelet_table

logger = logging.getLogger(__name__)

DEFAULT_J_MAX = 16
GRID_MARGIN = 4

# exponent e(j, ks) applied as 2^{-e j}
ExponentFn = Callable[[int, np.ndarray], np.ndarray]


def default_grid(j_max: int) -> int:
    return j_max + GRID_MARGIN


def _check_h(h: float) -> None:
    if not 0.0 < h < 1.0:
        raise DomainError(f"h must lie in (0, 1), got {h}")


def _constant_exponent(h: float) -> ExponentFn:
    return lambda j, ks: np.full(ks.shape, h, dtype=np.float64)


def _grid_indices(window: Tuple[float, float], J_grid: int) -> np.ndarray:
    a, b = window
    if b < a:
        raise SynthesisError(f"Empty window {window}")
    if not 0 <= J_grid <= MAX_RESOLUTION:
        raise SynthesisError(f"J_grid must lie in [0, {MAX_RESOLUTION}], got {J_grid}")
    lo, hi = math.ldexp(a, J_grid), math.ldexp(b, J_grid)
    if lo != math.floor(lo) or hi != math.floor(hi):
        raise SynthesisError(f"Window {window} is not aligned with the 2^-{J_grid} grid")
    return np.arange(int(lo), int(hi) + 1, dtype=np.int64)


def _check_levels(j_max: int, J_grid: int) -> None:
    if j_max < 0:
        raise SynthesisError(f"j_max must be non-negative, got {j_max}")
    if J_grid < j_max:
        raise SynthesisError(f"J_grid={J_grid} must be at least j_max={j_max}")


def _kahan_add(total: np.ndarray, comp: np.ndarray, term: np.ndarray) -> None:
    y = term - comp
    t = total + y
    comp[:] = (t - total) - y
    total[:] = t


def accumulate(arrays: Iterable[np.ndarray]) -> np.ndarray:
    """Compensated element-wise sum, in iteration order."""
    total, comp = None, None
    for arr in arrays:
        if total is None:
            total, comp = np.zeros_like(arr), np.zeros_like(arr)
        _kahan_add(total, comp, arr)
    if total is None:
        raise SynthesisError("Nothing to accumulate")
    return total


def _position_range(spec: WaveletSpec, j: int, idx_lo: int, idx_hi: int, J_grid: int) -> Tuple[int, int]:
    reach = math.ceil(spec.support[1])
    shift = J_grid - j
    return (idx_lo >> shift) - reach + 1, idx_hi >> shift


def _level_coefficients(field: CoefficientField, exponent: ExponentFn, j: int, k_lo: int, k_hi: int,
                        unit_positions: bool) -> np.ndarray:
    ks = np.arange(k_lo, k_hi + 1, dtype=np.int64)
    coeffs = field.values(j, ks) * np.exp2(-exponent(j, ks) * j)
    if unit_positions:
        coeffs[(ks < 0) | (ks >= (1 << j))] = 0.0
    return coeffs


def _level_sum(field: CoefficientField, spec: WaveletSpec, exponent: ExponentFn, j: int,
               grid: np.ndarray, J_grid: int, unit_positions: bool) -> np.ndarray:
    table = wavelet_table(spec, J_grid).values
    reach = math.ceil(spec.support[1])
    shift = J_grid - j
    floor_x = grid >> shift
    k_lo, k_hi = _position_range(spec, j, int(grid[0]), int(grid[-1]), J_grid)
    coeffs = _level_coefficients(field, exponent, j, k_lo, k_hi, unit_positions)

    total = np.zeros(grid.size)
    comp = np.zeros(grid.size)
    # ascending k at each point is descending offset m
    for m in range(reach - 1, -1, -1):
        ks = floor_x - m
        table_idx = (grid << j) - (ks << J_grid)
        inside = table_idx < table.size
        term = np.zeros(grid.size)
        term[inside] = coeffs[ks[inside] - k_lo] * table[table_idx[inside]]
        _kahan_add(total, comp, term)
    return total


def _synthesize(field: CoefficientField, spec: WaveletSpec, exponent: ExponentFn, levels: Sequence[int],
                grid: np.ndarray, J_grid: int, unit_positions: bool = False,
                workers: int = 1) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Return (sum over levels, per-level arrays) at the given grid indices."""

    def run(chunk: np.ndarray) -> List[np.ndarray]:
        return [_level_sum(field, spec, exponent, j, chunk, J_grid, unit_positions) for j in levels]

    if workers > 1 and grid.size >= 2 * workers:
        chunks = np.array_split(grid, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
        per_level = [np.concatenate([part[i] for part in parts]) for i in range(len(levels))]
    else:
        per_level = run(grid)

    if not per_level:
        return np.zeros(grid.size), []
    return accumulate(per_level), per_level


def tail_bound(spec: WaveletSpec, h: float, j_max: int) -> float:
    """Envelope of the truncation tail sup|sum_{j > j_max} f_{h,j}|, up to the random constant C_2."""
    table = wavelet_table(spec, 8).values
    sup_psi = float(np.max(np.abs(table)))
    reach = math.ceil(spec.support[1])
    j = j_max + 1
    return sup_psi * reach * math.sqrt(2.0 * math.log(2.0) * j) * 2.0 ** (-h * j) / (1.0 - 2.0 ** (-h))


def _provenance(field: CoefficientField, spec: WaveletSpec, series: str, j_max: int, J_grid: int,
                grid: np.ndarray, **extra) -> Provenance:
    return Provenance(
        series=series,
        seed=getattr(field, "seed", None),
        law=getattr(field, "law", "gaussian"),
        wavelet=spec.name,
        j_max=j_max,
        J_grid=J_grid,
        window=(math.ldexp(float(grid[0]), -J_grid), math.ldexp(float(grid[-1]), -J_grid)),
        **extra,
    )


def synth_fh(lattice: CoefficientField, spec: WaveletSpec, h: float, j_max: int = DEFAULT_J_MAX,
             window: Tuple[float, float] = (0.0, 1.0), J_grid: Optional[int] = None,
             workers: int = 1) -> SampledPath:
    """Partial sum of f_h = sum_j sum_k xi_{j,k} 2^{-hj} psi(2^j . - k) over j <= j_max."""
    _check_h(h)
    J_grid = default_grid(j_max) if J_grid is None else J_grid
    _check_levels(j_max, J_grid)
    grid = _grid_indices(window, J_grid)
    values, _ = _synthesize(lattice, spec, _constant_exponent(h), range(j_max + 1), grid, J_grid,
                            workers=workers)
    provenance = _provenance(lattice, spec, "fh", j_max, J_grid, grid, h=h,
                             tail_bound=tail_bound(spec, h, j_max))
    return SampledPath(values, J_grid, int(grid[0]), provenance)


def synth_level(lattice: CoefficientField, spec: WaveletSpec, h: float, j: int,
                window: Tuple[float, float] = (0.0, 1.0), J_grid: Optional[int] = None) -> SampledPath:
    """f_{h,j} = sum_k xi_{j,k} 2^{-hj} psi(2^j . - k)."""
    _check_h(h)
    J_grid = default_grid(j) if J_grid is None else J_grid
    _check_levels(j, J_grid)
    grid = _grid_indices(window, J_grid)
    values, _ = _synthesize(lattice, spec, _constant_exponent(h), [j], grid, J_grid)
    provenance = _provenance(lattice, spec, "fh-level", j, J_grid, grid, h=h)
    return SampledPath(values, J_grid, int(grid[0]), provenance)


def sum_levels(levels: Sequence[SampledPath]) -> np.ndarray:
    """Combine single-level paths exactly the way synth_fh does."""
    return accumulate(level.values for level in levels)


def synth_points(lattice: CoefficientField, spec: WaveletSpec, h: float, ts, j_max: int,
                 J_grid: int) -> np.ndarray:
    """f_h at arbitrary points of the 2^-J_grid grid."""
    _check_h(h)
    _check_levels(j_max, J_grid)
    scaled = np.ldexp(np.asarray(ts, dtype=np.float64), J_grid)
    if np.any(scaled != np.floor(scaled)):
        raise SynthesisError(f"Evaluation points must lie on the 2^-{J_grid} grid")
    grid = scaled.astype(np.int64)
    order = np.argsort(grid, kind="stable")
    values, _ = _synthesize(lattice, spec, _constant_exponent(h), range(j_max + 1), grid[order], J_grid)
    out = np.empty_like(values)
    out[order] = values
    return out


def synth_brownian(lattice: CoefficientField, j_max: Optional[int] = None, J_grid: int = 16,
                   include_linear_term: bool = True, workers: int = 1) -> SampledPath:
    """Faber-Schauder expansion sum xi_{j,k} 2^{-j/2} Lambda(2^j t - k) + xi t on [0, 1]."""
    j_max = J_grid - 1 if j_max is None else j_max
    _check_levels(j_max, J_grid)
    spec = WaveletSpec(family="faber-schauder")
    grid = _grid_indices((0.0, 1.0), J_grid)
    values, _ = _synthesize(lattice, spec, _constant_exponent(0.5), range(j_max + 1), grid, J_grid,
                            unit_positions=True, workers=workers)
    if include_linear_term:
        t = np.ldexp(grid.astype(np.float64), -J_grid)
        values = accumulate([values, lattice.auxiliary(0) * t])
    provenance = _provenance(lattice, spec, "brownian", j_max, J_grid, grid, h=0.5,
                             linear_term=include_linear_term, tail_bound=tail_bound(spec, 0.5, j_max))
    return SampledPath(values, J_grid, 0, provenance)


class RegularityReport(BaseModel):
    passed: bool
    c_H: float
    worst_ratio: float
    worst_distance: float
    distances: List[float]


class HurstFunction:
    """
    Exponent function H: R -> K, K a compact subset of (0, 1), with
    |H(x) - H(y)| <= c_H / |log|x - y|| for |x - y| < 1.
    """

    def __init__(self, evaluator: Callable[[np.ndarray], np.ndarray], c_H: float,
                 K_bounds: Tuple[float, float], descriptor: str = "custom"):
        lo, hi = K_bounds
        if not (0.0 < lo <= hi < 1.0):
            raise SynthesisError(f"H range {K_bounds} is not inside (0, 1)")
        self._evaluator = evaluator
        self.c_H = float(c_H)
        self.K_bounds = (float(lo), float(hi))
        self.descriptor = descriptor

    def __call__(self, t) -> np.ndarray:
        return np.asarray(self._evaluator(np.asarray(t, dtype=np.float64)), dtype=np.float64)

    def __repr__(self) -> str:
        return f"HurstFunction('{self.descriptor}', c_H={self.c_H:.4g}, K={self.K_bounds})"

    @classmethod
    def constant(cls, a: float) -> "HurstFunction":
        return cls(lambda t: np.full(np.shape(t), a, dtype=np.float64), 0.0, (a, a), f"constant:{a:g}")

    @classmethod
    def parse(cls, descriptor: str) -> "HurstFunction":
        """`constant:a`, `linear:a,b` (a + b clip(t, 0, 1)) or `sine:a,b` (a + b sin 2 pi t)."""
        match = re.fullmatch(r"\s*(constant|linear|sine)\s*:\s*([^,]+)(?:,\s*(.+))?\s*", descriptor)
        if match is None:
            raise SynthesisError(f"Unrecognized H descriptor '{descriptor}'")
        kind, a_text, b_text = match.groups()
        try:
            a = float(a_text)
            b = float(b_text) if b_text is not None else 0.0
        except ValueError as e:
            raise SynthesisError(f"Unrecognized H descriptor '{descriptor}': {e}")
        if kind == "constant":
            return cls.constant(a)
        if kind == "linear":
            return cls(lambda t: a + b * np.clip(t, 0.0, 1.0), abs(b) / math.e,
                       (min(a, a + b), max(a, a + b)), f"linear:{a:g},{b:g}")
        return cls(lambda t: a + b * np.sin(2.0 * np.pi * t), 2.0 * math.pi * abs(b) / math.e,
                   (a - abs(b), a + abs(b)), f"sine:{a:g},{b:g}")

    def check_regularity(self, mesh_size: int = 513, mesh: Tuple[float, float] = (-1.0, 2.0)) -> RegularityReport:
        """Finite-mesh screen of the log-modulus condition at distances 2^-2 .. 2^-20."""
        xs = np.linspace(mesh[0], mesh[1], mesh_size)
        distances = [2.0 ** -p for p in range(2, 21)]
        worst, worst_d = 0.0, distances[0]
        base = self(xs)
        if np.min(base) < self.K_bounds[0] - 1e-12 or np.max(base) > self.K_bounds[1] + 1e-12:
            raise SynthesisError(f"{self!r} leaves its declared range on the mesh")
        for d in distances:
            ratio = float(np.max(np.abs(self(xs + d) - base)) * abs(math.log(d)))
            if ratio > worst:
                worst, worst_d = ratio, d
        return RegularityReport(passed=worst <= self.c_H + 1e-12, c_H=self.c_H, worst_ratio=worst,
                                worst_distance=worst_d, distances=distances)


def _hurst_exponent(H: HurstFunction) -> ExponentFn:
    return lambda j, ks: H(np.ldexp(ks.astype(np.float64), -j))


def synth_fH(lattice: CoefficientField, spec: WaveletSpec, H: HurstFunction, j_max: int = DEFAULT_J_MAX,
             window: Tuple[float, float] = (0.0, 1.0), J_grid: Optional[int] = None,
             workers: int = 1) -> SampledPath:
    """Multifractional series with exponent H(k 2^-j) on coefficient (j, k)."""
    report = H.check_regularity()
    if not report.passed:
        raise SynthesisError(
            f"{H!r} fails the log-modulus check: ratio {report.worst_ratio:.4g} at distance "
            f"{report.worst_distance:.3g} exceeds c_H"
        )
    J_grid = default_grid(j_max) if J_grid is None else J_grid
    _check_levels(j_max, J_grid)
    grid = _grid_indices(window, J_grid)
    values, _ = _synthesize(lattice, spec, _hurst_exponent(H), range(j_max + 1), grid, J_grid,
                            workers=workers)
    provenance = _provenance(lattice, spec, "fH", j_max, J_grid, grid, hurst=H.descriptor,
                             tail_bound=tail_bound(spec, H.K_bounds[0], j_max))
    return SampledPath(values, J_grid, int(grid[0]), provenance)


def _coefficients(field: CoefficientField, spec: WaveletSpec, exponent: ExponentFn, levels: Iterable[int],
                  window: Tuple[float, float], unit_positions: bool) -> CoefficientArray:
    coeffs = CoefficientArray(outside=0.0 if unit_positions else None, source="exact")
    a, b = window
    reach = math.ceil(spec.support[1])
    for j in levels:
        if unit_positions:
            k_lo, k_hi = 0, (1 << j) - 1
        else:
            k_lo = math.floor(math.ldexp(a, j)) - reach + 1
            k_hi = math.floor(math.ldexp(b, j))
        coeffs.set_row(j, k_lo, _level_coefficients(field, exponent, j, k_lo, k_hi, unit_positions))
    return coeffs


def series_coefficients(lattice: CoefficientField, spec: WaveletSpec, h: float, j_max: int,
                        window: Tuple[float, float] = (0.0, 1.0)) -> CoefficientArray:
    """Exact c_{j,k} = 2^{-hj} xi_{j,k} for every k whose support meets the window."""
    _check_h(h)
    return _coefficients(lattice, spec, _constant_exponent(h), range(j_max + 1), window, False)


def multifractional_coefficients(lattice: CoefficientField, spec: WaveletSpec, H: HurstFunction, j_max: int,
                                 window: Tuple[float, float] = (0.0, 1.0)) -> CoefficientArray:
    return _coefficients(lattice, spec, _hurst_exponent(H), range(j_max + 1), window, False)


def check_block_gaps(blocks: Sequence[int]) -> None:
    if not blocks:
        raise SynthesisError("At least one scale block is required")
    if blocks[0] < 1:
        raise SynthesisError(f"Scale blocks must start at j >= 1, got {blocks[0]}")
    for jn, jnext in zip(blocks, blocks[1:]):
        # floor(log2(jn^2)) computed exactly
        needed = jn + (jn * jn).bit_length() - 1 + 1
        if jnext <= needed:
            raise SynthesisError(
                f"Gap condition violated: block {jnext} must exceed {needed} after block {jn}"
            )


def block_exponents(h: float, blocks: Sequence[int]) -> List[float]:
    """alpha_n = h - 1/sqrt(j_n)."""
    return [h - 1.0 / math.sqrt(jn) for jn in blocks]


@dataclass
class PrevalenceSeries:
    path: SampledPath
    coefficients: CoefficientArray
    alphas: List[float]


def synth_prevalence_counterexample(lattice: CoefficientField, spec: WaveletSpec, h: float,
                                    blocks: Sequence[int], j_max: int, J_grid: Optional[int] = None,
                                    window: Tuple[float, float] = (0.0, 1.0),
                                    workers: int = 1) -> PrevalenceSeries:
    """
    sum_n sum_{j_n <= j < j_{n+1}} sum_{0 <= k < 2^j} 2^{-alpha_n j} eps_{j,k} psi_{j,k},
    the last block running up to j_max.
    """
    if h <= 0.0:
        raise DomainError(f"h must be positive, got {h}")
    blocks = list(blocks)
    check_block_gaps(blocks)
    J_grid = default_grid(j_max) if J_grid is None else J_grid
    _check_levels(j_max, J_grid)
    alphas = block_exponents(h, blocks)

    def exponent(j: int, ks: np.ndarray) -> np.ndarray:
        n = max(i for i, jn in enumerate(blocks) if jn <= j)
        return np.full(ks.shape, alphas[n], dtype=np.float64)

    levels = range(blocks[0], j_max + 1)
    grid = _grid_indices(window, J_grid)
    values, _ = _synthesize(lattice, spec, exponent, levels, grid, J_grid, unit_positions=True,
                            workers=workers)
    provenance = _provenance(lattice, spec, "prevalence", j_max, J_grid, grid, h=h, blocks=blocks)
    path = SampledPath(values, J_grid, int(grid[0]), provenance)
    coefficients = _coefficients(lattice, spec, exponent, levels, window, unit_positions=True)
    return PrevalenceSeries(path=path, coefficients=coefficients, alphas=alphas)


def baire_alpha(h: float, j: int) -> float:
    return h - 1.0 / math.sqrt(j)


def baire_perturb(coeffs: CoefficientArray, h: float, J0: int) -> CoefficientArray:
    """
    Round coefficients at scales j >= J0 onto the lattice 2^{-alpha_j j} Z \\ {0},
    alpha_j = h - 1/sqrt(j): integer part when |2^{alpha_j j} e| >= 2, otherwise
    sign(e) 2^{-alpha_j j}.
    """
    if J0 < 1:
        raise DomainError(f"J0 must be at least 1, got {J0}")
    out = CoefficientArray(outside=coeffs.outside, source=coeffs.source)
    for j in coeffs.scales:
        row = coeffs.rows[j]
        if j < J0:
            out.set_row(j, row.k0, row.values.copy(), row.valid.copy())
            continue
        scale = 2.0 ** (baire_alpha(h, j) * j)
        v = scale * row.values
        nearest = np.round(v)
        v = np.where(np.abs(v - nearest) < 1e-9, nearest, v)
        sign = np.where(v < 0.0, -1.0, 1.0)
        units = np.where(np.abs(v) >= 2.0, np.trunc(v), sign)
        out.set_row(j, row.k0, units / scale, row.valid.copy())
    return out


def baire_band_violations(original: CoefficientArray, perturbed: CoefficientArray, h: float, J0: int) -> int:
    """Count coefficients at j >= J0 breaking the nonzero-integer or the unit-distance property."""
    bad = 0
    for j in original.scales:
        if j < J0:
            continue
        scale = 2.0 ** (baire_alpha(h, j) * j)
        e = original.rows[j].values
        c = perturbed.rows[j].values
        units = np.abs(c) * scale
        not_integer = (np.abs(units - np.round(units)) > 1e-9) | (np.round(units) < 1)
        too_far = np.abs(e - c) * scale > 1.0 + 1e-9
        bad += int(np.count_nonzero(not_integer | too_far))
    return bad
