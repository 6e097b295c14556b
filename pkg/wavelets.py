"""
Mother wavelets on dyadic grids and the forward analysis transform.

Daubechies scaling functions are evaluated exactly on dyadic points: the values
at the integers are the normalized fixed point of the two-scale relation, and
every refinement step fills the new midpoints from the previous grid. Filters
come from PyWavelets (`rec_lo` / `rec_hi`), so that

    phi(x) = sqrt(2) sum_k h_k phi(2x - k),   psi(x) = sqrt(2) sum_k g_k phi(2x - k).

Coefficients use the L-infinity normalization c_{j,k} = 2^j int f psi(2^j x - k).
"""

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Optional, Tuple

import numpy as np
import pywt
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from errors import WaveletError
from models import CoefficientArray, SampledPath

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)
MAX_RESOLUTION = 24
ANALYSIS_MARGIN = 4
DEFAULT_RESOLUTION = 12


class WaveletSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: Literal["faber-schauder", "daubechies"]
    order: int = 0

    @model_validator(mode="after")
    def _check_order(self):
        if self.family == "daubechies" and not 2 <= self.order <= 10:
            raise WaveletError(f"Unsupported Daubechies order N={self.order}, expected 2..10")
        return self

    @classmethod
    def parse(cls, text: str) -> "WaveletSpec":
        name = text.strip().lower()
        if name in ("faber-schauder", "fs", "tent", "schauder"):
            return cls(family="faber-schauder")
        match = re.fullmatch(r"(?:db|daubechies)\(?(\d+)\)?", name)
        if match is None:
            raise WaveletError(f"Unknown wavelet '{text}'")
        try:
            return cls(family="daubechies", order=int(match.group(1)))
        except ValidationError:
            raise WaveletError(f"Unsupported Daubechies order in '{text}', expected db2..db10")

    @property
    def name(self) -> str:
        return "faber-schauder" if self.family == "faber-schauder" else f"db{self.order}"

    @property
    def support(self) -> Tuple[float, float]:
        if self.family == "faber-schauder":
            return 0.0, 1.0
        return 0.0, float(2 * self.order - 1)

    @property
    def orthonormal(self) -> bool:
        return self.family == "daubechies"

    def filters(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.orthonormal:
            raise WaveletError(f"{self.name} has no orthonormal filter pair")
        return _filters(self.order)


@lru_cache(maxsize=None)
def _filters(order: int) -> Tuple[np.ndarray, np.ndarray]:
    wavelet = pywt.Wavelet(f"db{order}")
    return np.asarray(wavelet.rec_lo, dtype=np.float64), np.asarray(wavelet.rec_hi, dtype=np.float64)


@dataclass(frozen=True)
class DyadicTable:
    """psi (and, for Daubechies, phi) at support_start + i 2^-resolution."""

    spec: WaveletSpec
    resolution: int
    values: np.ndarray
    scaling: Optional[np.ndarray] = None

    @property
    def support(self) -> Tuple[float, float]:
        return self.spec.support

    @property
    def grid_points(self) -> np.ndarray:
        a = self.support[0]
        return a + np.ldexp(np.arange(self.values.size, dtype=np.float64), -self.resolution)

    def rows(self):
        return zip(self.grid_points.tolist(), self.values.tolist())


def tent(x):
    """Faber-Schauder tent: x on [0, 1/2), 1 - x on [1/2, 1), 0 elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where((x >= 0.0) & (x < 0.5), x, np.where((x >= 0.5) & (x < 1.0), 1.0 - x, 0.0))
    return float(out) if out.ndim == 0 else out


def _integer_scaling_values(h: np.ndarray) -> np.ndarray:
    """phi(0), ..., phi(L): fixed point of the two-scale relation with sum 1."""
    L = h.size - 1
    interior = np.arange(1, L)
    A = np.zeros((L - 1, L - 1))
    for row, n in enumerate(interior):
        for col, m in enumerate(interior):
            idx = 2 * n - m
            if 0 <= idx <= L:
                A[row, col] = SQRT2 * h[idx]
    system = np.vstack([A - np.eye(L - 1), np.ones((1, L - 1))])
    rhs = np.zeros(L)
    rhs[-1] = 1.0
    solution, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    phi = np.zeros(L + 1)
    phi[1:L] = solution
    return phi


def _refine(previous: np.ndarray, taps: np.ndarray, level: int) -> np.ndarray:
    """Apply sqrt(2) sum_k taps_k f(2x - k) on the step 2^-level grid from the step 2^-(level-1) grid."""
    n_prev = previous.size - 1
    idx = np.arange(2 * n_prev + 1, dtype=np.int64)
    half = 1 << (level - 1)
    out = np.zeros(idx.size)
    for k, tap in enumerate(taps):
        src = idx - k * half
        ok = (src >= 0) & (src <= n_prev)
        out[ok] += SQRT2 * tap * previous[src[ok]]
    return out


@lru_cache(maxsize=6)
def _daubechies_tables(order: int, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    h, g = _filters(order)
    phi = _integer_scaling_values(h)
    for level in range(1, resolution + 1):
        refined = _refine(phi, h, level)
        refined[::2] = phi
        phi = refined
    # psi on the same grid: 2x - k lands on the phi grid at index 2i - k 2^r
    n = phi.size - 1
    idx = np.arange(n + 1, dtype=np.int64)
    psi = np.zeros(n + 1)
    for k, tap in enumerate(g):
        src = 2 * idx - k * (1 << resolution)
        ok = (src >= 0) & (src <= n)
        psi[ok] += SQRT2 * tap * phi[src[ok]]
    phi.setflags(write=False)
    psi.setflags(write=False)
    return phi, psi


@lru_cache(maxsize=6)
def _tent_table(resolution: int) -> np.ndarray:
    values = tent(np.ldexp(np.arange((1 << resolution) + 1, dtype=np.float64), -resolution))
    values.setflags(write=False)
    return values


def cascade(spec: WaveletSpec, resolution: int) -> DyadicTable:
    if spec.family != "daubechies":
        raise WaveletError(f"Cascade evaluation needs a Daubechies wavelet, got {spec.name}")
    if not 0 <= resolution <= MAX_RESOLUTION:
        raise WaveletError(f"Resolution must lie in [0, {MAX_RESOLUTION}], got {resolution}")
    phi, psi = _daubechies_tables(spec.order, resolution)
    return DyadicTable(spec=spec, resolution=resolution, values=psi, scaling=phi)


def wavelet_table(spec: WaveletSpec, resolution: int) -> DyadicTable:
    if spec.family == "faber-schauder":
        return DyadicTable(spec=spec, resolution=resolution, values=_tent_table(resolution))
    return cascade(spec, resolution)


def refinement_residual(table: DyadicTable) -> float:
    """Sup norm of phi(x) - sqrt(2) sum h_k phi(2x - k) over the table grid."""
    if table.scaling is None:
        raise WaveletError("Table carries no scaling function")
    phi = table.scaling
    h, _ = table.spec.filters()
    n = phi.size - 1
    idx = np.arange(n + 1, dtype=np.int64)
    rebuilt = np.zeros(n + 1)
    for k, tap in enumerate(h):
        src = 2 * idx - k * (1 << table.resolution)
        ok = (src >= 0) & (src <= n)
        rebuilt[ok] += SQRT2 * tap * phi[src[ok]]
    return float(np.max(np.abs(rebuilt - phi)))


def evaluate_many(spec: WaveletSpec, j: int, k: int, ts, resolution: int = DEFAULT_RESOLUTION,
                  interpolate: bool = False) -> np.ndarray:
    """psi(2^j t - k) for every t in ts."""
    x = np.ldexp(np.asarray(ts, dtype=np.float64), j) - k
    x = np.atleast_1d(x)
    if spec.family == "faber-schauder":
        return tent(x)

    a, b = spec.support
    out = np.zeros(x.shape)
    inside = (x > a) & (x < b)
    if not inside.any():
        return out
    table = cascade(spec, resolution)
    pos = np.ldexp(x[inside] - a, resolution)
    lower = np.floor(pos)
    off_grid = pos != lower
    if off_grid.any() and not interpolate:
        raise WaveletError(
            f"Resolution mismatch: 2^{j} t - {k} is not on the 2^-{resolution} table grid"
        )
    i = lower.astype(np.int64)
    frac = pos - lower
    upper = np.minimum(i + 1, table.values.size - 1)
    out[inside] = (1.0 - frac) * table.values[i] + frac * table.values[upper]
    return out


def evaluate(spec: WaveletSpec, j: int, k: int, t: float, resolution: int = DEFAULT_RESOLUTION,
             interpolate: bool = False) -> float:
    return float(evaluate_many(spec, j, k, [t], resolution, interpolate)[0])


@lru_cache(maxsize=None)
def _deconvolution_guard(order: int) -> int:
    """Samples to drop at each edge so that circular deconvolution wrap-around is below 1e-14."""
    phi, _ = _daubechies_tables(order, 0)
    size = 4096
    kernel = np.zeros(size)
    kernel[:phi.size] = phi
    spectrum = np.fft.rfft(kernel)
    if np.min(np.abs(spectrum)) < 1e-8:
        raise WaveletError(f"db{order} sampling symbol nearly vanishes; cannot prefilter samples")
    inverse = np.abs(np.fft.irfft(1.0 / spectrum, n=size))
    distance = np.minimum(np.arange(size), size - np.arange(size))
    peak = inverse.max()
    for guard in range(1, size // 2):
        if inverse[distance >= guard].max() < 1e-14 * peak:
            return guard
    return size // 2


def analyze(path: SampledPath, spec: WaveletSpec, j_max: int) -> CoefficientArray:
    """
    Forward transform of a sampled path.

    Samples are first deconvolved by phi(integers), which is exact for any
    function of V_{J_grid} (in particular every series synthesized here with
    j_max < J_grid), then run through the orthonormal pyramid. Each L2 detail
    at scale j is multiplied by 2^{j/2}. Only coefficients computed entirely
    from interior samples are stored; everything else reads back as invalid.
    """
    if not spec.orthonormal:
        raise WaveletError(f"analyze needs an orthonormal family, got {spec.name}")
    J = path.J_grid
    if J < j_max + ANALYSIS_MARGIN:
        raise WaveletError(
            f"Path resolution 2^-{J} too coarse for j_max={j_max} (need J_grid >= j_max + {ANALYSIS_MARGIN})"
        )
    wavelet = pywt.Wavelet(spec.name)
    F = wavelet.dec_len
    guard = _deconvolution_guard(spec.order) + F - 1
    if path.n <= 2 * guard + F - 1:
        raise WaveletError(f"Path window too short: {path.n} samples, need more than {2 * guard + F - 1}")

    phi_int, _ = _daubechies_tables(spec.order, 0)
    kernel = np.zeros(path.n)
    kernel[:phi_int.size] = phi_int
    approx = np.fft.irfft(np.fft.rfft(path.values) / np.fft.rfft(kernel), n=path.n)
    approx = approx * 2.0 ** (-J / 2.0)
    approx = approx[guard:path.n - guard]
    n0 = path.i0 + guard

    # with zero padding, output i of pywt.dwt reads approx[2i - (F - 2) : 2i + 2]; keep
    # only the outputs whose taps all fall on samples, indexed by k = n0/2 + i - (F - 2)/2
    first = (F - 2) // 2
    coeffs = CoefficientArray(outside=None, source="analysis")
    level = J
    while level > 0:
        if n0 % 2:
            approx, n0 = approx[1:], n0 + 1
        if approx.size < F:
            break
        count = (approx.size - F) // 2 + 1
        cA, cD = pywt.dwt(approx, wavelet, mode="zero")
        level -= 1
        if level <= j_max:
            coeffs.set_row(level, n0 // 2, cD[first:first + count] * 2.0 ** (level / 2.0))
        approx, n0 = cA[first:first + count], n0 // 2
    logger.debug("Analyzed %d samples into scales %s", path.n, coeffs.scales)
    return coeffs
