"""
Pointwise regularity measurements on sampled paths and coefficient arrays.

Three moduli are compared throughout:

    rapid     x^h sqrt(log 1/x)          (0 < x < 1)
    ordinary  x^h sqrt(log log 1/x)      (0 < x < 1/e)
    slow      x^h                        (0 < x < 1)
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import linregress

from dyadic import locate
from errors import DomainError, EstimationError
from models import CoefficientArray, SampledPath
from randomness import CoefficientField, CoefficientLattice, draw_points
from synthesis import synth_points
from wavelets import WaveletSpec

logger = logging.getLogger(__name__)

ModulusKind = Literal["rapid", "ordinary", "slow"]
KINDS: Tuple[str, ...] = ("slow", "ordinary", "rapid")
TERMINAL_WINDOW = 6
MIN_USABLE_SCALES = 4
LEADER_MARGIN = 4


class Modulus(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ModulusKind
    h: float = Field(gt=0.0)

    @property
    def x0(self) -> float:
        return 1.0 / math.e if self.kind == "ordinary" else 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if np.any(x <= 0.0) or np.any(x >= self.x0):
            raise DomainError(f"{self.kind} modulus is defined on (0, {self.x0:.6g}), got {x}")
        base = x ** self.h
        if self.kind == "rapid":
            return base * np.sqrt(np.log(1.0 / x))
        if self.kind == "ordinary":
            return base * np.sqrt(np.log(np.log(1.0 / x)))
        return base


def modulus_eval(mod: Modulus, x: float) -> float:
    return float(mod(x))


class RatioProfile(BaseModel):
    t: float
    kind: ModulusKind
    h: float
    j_lo: int
    j_hi: int
    values: List[float]

    @property
    def scales(self) -> List[int]:
        return list(range(self.j_lo, self.j_hi + 1))

    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.values))

    def terminal(self, window: int = TERMINAL_WINDOW) -> float:
        """Max over the finest `window` scales, the limsup proxy."""
        return float(max(self.values[-window:]))


def _annulus(J_grid: int, j: int) -> np.ndarray:
    return np.arange(1 << (J_grid - j), 1 << (J_grid - j + 1), dtype=np.int64)


def ratio_profile(path: SampledPath, t: float, mod: Modulus, j_lo: int, j_hi: int) -> RatioProfile:
    """R_j(t) = max |f(s) - f(t)| / mod(|s - t|) over grid s with |s - t| in [2^-j, 2^-j+1)."""
    J = path.J_grid
    if not 1 <= j_lo <= j_hi:
        raise DomainError(f"Invalid scale range [{j_lo}, {j_hi}]")
    if j_hi > J - 1:
        raise DomainError(f"j_hi={j_hi} exceeds J_grid - 1 = {J - 1}")
    i = path.grid_index(t)
    reach = (1 << (J - j_lo + 1)) - 1
    if i - reach < 0 or i + reach >= path.n:
        raise DomainError(f"t={t} is too close to the window boundary for scale {j_lo}")
    if reach * path.step >= mod.x0:
        raise DomainError(f"Scale {j_lo} reaches distances outside the {mod.kind} modulus domain")

    v, center = path.values, path.values[i]
    out = []
    for j in range(j_lo, j_hi + 1):
        d = _annulus(J, j)
        omega = mod(d * path.step)
        right = np.abs(v[i + d] - center) / omega
        left = np.abs(v[i - d] - center) / omega
        out.append(float(max(right.max(), left.max())))
    return RatioProfile(t=t, kind=mod.kind, h=mod.h, j_lo=j_lo, j_hi=j_hi, values=out)


class UniformRatio(BaseModel):
    j: int
    value: float
    t: float
    s: float


def uniform_ratio(path: SampledPath, mod: Modulus, j: int, interior: Optional[Tuple[float, float]] = None) -> UniformRatio:
    """
    Max over grid pairs (t, t + r), r in [2^-j, 2^-j+1), of |f(t + r) - f(t)| / mod(r).
    `t` of the result is the left point, `interior` optionally restricts it.
    """
    J = path.J_grid
    if not 1 <= j <= J:
        raise DomainError(f"Scale j={j} outside [1, {J}]")
    d_all = _annulus(J, j)
    d_all = d_all[d_all < path.n]
    if d_all.size == 0:
        raise DomainError(f"Window too short for scale {j}")
    if d_all[-1] * path.step >= mod.x0:
        raise DomainError(f"Scale {j} reaches distances outside the {mod.kind} modulus domain")

    times = path.times
    allowed = np.ones(path.n, dtype=bool)
    if interior is not None:
        allowed = (times >= interior[0]) & (times <= interior[1])

    best, best_i, best_d = -1.0, 0, int(d_all[0])
    v = path.values
    for d in d_all:
        d = int(d)
        ratios = np.abs(v[d:] - v[:-d]) / float(mod(d * path.step))
        ratios[~allowed[:-d]] = -1.0
        i = int(np.argmax(ratios))
        if ratios[i] > best:
            best, best_i, best_d = float(ratios[i]), i, d
    if best < 0.0:
        raise DomainError("No admissible pair inside the requested interior")
    return UniformRatio(j=j, value=best, t=float(times[best_i]), s=float(times[best_i + best_d]))


class CoefficientTrace(BaseModel):
    t: float
    kind: ModulusKind
    scales: List[int]
    values: List[float]
    running_max: List[float]

    @property
    def summary(self) -> float:
        return self.running_max[-1]


def coefficient_trace(source: Union[CoefficientArray, CoefficientField], t: float, h: float,
                      mod: Modulus, j_range: Tuple[int, int]) -> CoefficientTrace:
    """|c_{j,k_j(t)}| / mod(2^-j); a lattice stands for the f_h coefficients 2^{-hj} xi.

    Scales with 2^-j outside the modulus domain (j = 0 for every kind, also j = 1 for the
    ordinary modulus) are normalized by 2^{-hj} alone.
    """
    j_lo, j_hi = j_range
    scales = list(range(j_lo, j_hi + 1))
    values = []
    for j in scales:
        k = locate(t, j)
        if isinstance(source, CoefficientArray):
            c = source.get(j, k)
        else:
            c = 2.0 ** (-h * j) * source.value(j, k)
        x = 2.0 ** -j
        scale = float(mod(x)) if x < mod.x0 else x ** mod.h
        values.append(abs(c) / scale)
    running = np.fmax.accumulate(np.asarray(values)).tolist()
    return CoefficientTrace(t=t, kind=mod.kind, scales=scales, values=values, running_max=running)


class LeaderPyramid:
    """d_{j,k} = max |c| over the dyadic intervals inside 3 lambda(j,k), scales up to j_max."""

    def __init__(self, leaders: CoefficientArray, j_max: int, margin: int):
        self.leaders = leaders
        self.j_max = j_max
        self.margin = margin

    @property
    def top(self) -> int:
        return self.j_max - self.margin

    def leader(self, j: int, k: int) -> float:
        return self.leaders.get(j, k)

    def along(self, t: float, scales: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        out = np.empty(len(scales))
        valid = np.empty(len(scales), dtype=bool)
        for n, j in enumerate(scales):
            vals, ok = self.leaders.lookup(j, [locate(t, j)])
            out[n], valid[n] = vals[0], ok[0]
        return out, valid


def _take(values: np.ndarray, valid: np.ndarray, k0: int, ks: np.ndarray,
          outside: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    fill = np.nan if outside is None else abs(outside)
    out = np.full(ks.shape, fill)
    ok = np.full(ks.shape, outside is not None)
    pos = ks - k0
    inside = (pos >= 0) & (pos < values.size)
    out[inside] = values[pos[inside]]
    ok[inside] = valid[pos[inside]]
    return out, ok


def leader_pyramid(coeffs: CoefficientArray, j_max: Optional[int] = None,
                   margin: int = LEADER_MARGIN) -> LeaderPyramid:
    j_max = coeffs.j_max if j_max is None else j_max
    if j_max < 0:
        raise EstimationError("No coefficients to build leaders from")
    if margin < 0 or margin > j_max:
        raise DomainError(f"margin={margin} must lie in [0, j_max={j_max}]")

    # sup over the dyadic subtree of lambda, built from the finest scale up
    subtree: Dict[int, Tuple[int, np.ndarray, np.ndarray]] = {}
    child = None
    for j in range(j_max, -1, -1):
        if j in coeffs.rows:
            row = coeffs.rows[j]
            lo, hi = row.k0, row.k1
        elif child is not None:
            lo, hi = child[0] >> 1, (child[0] + child[1].size - 1) >> 1
        else:
            continue
        ks = np.arange(lo, hi + 1, dtype=np.int64)
        c, ok = coeffs.lookup(j, ks)
        m = np.abs(c)
        if child is not None:
            for offset in (0, 1):
                cm, cok = _take(child[1], child[2], child[0], 2 * ks + offset, coeffs.outside)
                m = np.fmax(m, cm)
                ok = ok & cok
        m[~ok] = np.nan
        subtree[j] = (lo, m, ok)
        child = subtree[j]

    leaders = CoefficientArray(outside=None, source=f"leaders:{coeffs.source}")
    for j in range(0, j_max - margin + 1):
        if j not in subtree:
            continue
        lo, m, ok = subtree[j]
        ks = np.arange(lo, lo + m.size, dtype=np.int64)
        d, dok = m.copy(), ok.copy()
        for shift in (-1, 1):
            nm, nok = _take(m, ok, lo, ks + shift, coeffs.outside)
            d = np.fmax(d, nm)
            dok = dok & nok
        d[~dok] = np.nan
        leaders.set_row(j, lo, d, dok)
    return LeaderPyramid(leaders, j_max, margin)


class ExponentEstimate(BaseModel):
    t: float
    h_hat: Optional[float] = None
    intercept: Optional[float] = None
    stderr: Optional[float] = None
    scales: List[int]
    leaders: List[float]
    degenerate: bool = False
    target: Optional[float] = None


def leader_exponent(pyramid: LeaderPyramid, t: float, j_range: Tuple[int, int]) -> ExponentEstimate:
    """Least-squares slope of log2 d_{j,k_j(t)} against -j."""
    j_lo, j_hi = j_range
    if j_hi > pyramid.top or j_lo < 0 or j_hi < j_lo:
        raise EstimationError(f"Scale range {j_range} outside the leader scales [0, {pyramid.top}]")
    scales = list(range(j_lo, j_hi + 1))
    d, valid = pyramid.along(t, scales)
    if not valid.all():
        bad = [j for j, ok in zip(scales, valid) if not ok]
        raise EstimationError(f"Leaders at t={t} are not valid at scales {bad}")
    positive = d > 0.0
    if np.count_nonzero(positive) < 2:
        return ExponentEstimate(t=t, scales=scales, leaders=d.tolist(), degenerate=True)
    js = np.asarray(scales, dtype=np.float64)[positive]
    fit = linregress(-js, np.log2(d[positive]))
    return ExponentEstimate(t=t, h_hat=float(fit.slope), intercept=float(fit.intercept),
                            stderr=float(fit.stderr), scales=scales, leaders=d.tolist())


def exponent_map(pyramid: LeaderPyramid, ts: Sequence[float], j_range: Tuple[int, int],
                 H=None) -> List[ExponentEstimate]:
    estimates = []
    for t in ts:
        est = leader_exponent(pyramid, t, j_range)
        if H is not None:
            est.target = float(H(t))
        estimates.append(est)
    return estimates


class Thresholds(BaseModel):
    schema_version: int = 1
    terminal_window: int = TERMINAL_WINDOW
    growth_slow: float
    growth_factor_slow: float
    growth_ordinary: float
    growth_rapid: float
    trace_floor: float
    # terminal ratios over the typical coefficient size, used when coefficients are known
    level_slow: float = 0.8
    level_rapid: float = 3.0
    calibrated: bool = False
    source: str = "default"


DEFAULT_THRESHOLDS = Thresholds(growth_slow=0.02, growth_factor_slow=1.15, growth_ordinary=0.05,
                                growth_rapid=0.12, trace_floor=0.25)


def load_thresholds(path: Union[str, Path, None]) -> Thresholds:
    if path is None or not Path(path).exists():
        logger.warning("Threshold fixture %s not found, using built-in defaults", path)
        return DEFAULT_THRESHOLDS
    with open(path, "r", encoding="utf-8") as fh:
        return Thresholds.model_validate(json.load(fh))


class PointDiagnostics(BaseModel):
    t: float
    h: float
    scales: List[int]
    profiles: Dict[str, List[float]]
    terminal: Dict[str, float]
    growth: Dict[str, float]
    growth_factor: Dict[str, float]
    trace_relative: Optional[float] = None
    level: Optional[Dict[str, float]] = None


class PointClassification(BaseModel):
    t: float
    verdict: Literal["slow", "ordinary", "rapid", "inconclusive"]
    group: Optional[str] = None
    diagnostics: PointDiagnostics


def _growth(values: np.ndarray, window: int) -> Tuple[float, float]:
    """(slope of log running max against j, terminal max / coarse max)."""
    running = np.maximum.accumulate(values)
    positive = running > 0.0
    slope = 0.0
    if np.count_nonzero(positive) >= 2:
        js = np.flatnonzero(positive).astype(np.float64)
        slope = float(linregress(js, np.log(running[positive])).slope)
    coarse = values[:-window] if values.size > window else values[:1]
    terminal = values[-window:].max()
    top = coarse.max()
    factor = 1.0 if top == 0.0 else float(terminal / top)
    return slope, factor


def _typical_coefficient(coeffs: CoefficientArray, h: float, scales: Sequence[int]) -> float:
    """Median of |c_{j,k}| 2^{hj} over every known coefficient at the given scales."""
    normalized = []
    for j in scales:
        row = coeffs.rows.get(j)
        if row is not None:
            normalized.append(np.abs(row.values[row.valid]) * 2.0 ** (h * j))
    pool = np.concatenate(normalized) if normalized else np.empty(0)
    return float(np.median(pool)) if pool.size else 0.0


def _trace_relative(coeffs: CoefficientArray, t: float, h: float, scales: Sequence[int], typical: float) -> float:
    """Running max of |c_{j,k_j(t)}| 2^{hj} over the typical coefficient size."""
    trace = coefficient_trace(coeffs, t, h, Modulus(kind="slow", h=h), (scales[0], scales[-1]))
    peak = trace.summary
    if typical == 0.0 or not math.isfinite(peak):
        return 0.0
    return float(peak / typical)


def point_features(path: SampledPath, coeffs: Optional[CoefficientArray], t: float, h: float,
                   j_range: Tuple[int, int], window: int = TERMINAL_WINDOW) -> PointDiagnostics:
    j_lo, j_hi = j_range
    if j_hi - j_lo + 1 < MIN_USABLE_SCALES:
        raise EstimationError(f"Need at least {MIN_USABLE_SCALES} scales, got range {j_range}")
    scales = list(range(j_lo, j_hi + 1))
    profiles, terminal, growth, factor = {}, {}, {}, {}
    for kind in KINDS:
        prof = ratio_profile(path, t, Modulus(kind=kind, h=h), j_lo, j_hi)
        values = np.asarray(prof.values)
        profiles[kind] = prof.values
        terminal[kind] = prof.terminal(window)
        growth[kind], factor[kind] = _growth(values, window)
    trace, level = None, None
    if coeffs is not None:
        typical = _typical_coefficient(coeffs, h, scales)
        trace = _trace_relative(coeffs, t, h, scales, typical)
        if typical > 0.0:
            level = {kind: float(terminal[kind] / typical) for kind in KINDS}
    return PointDiagnostics(t=t, h=h, scales=scales, profiles=profiles, terminal=terminal, growth=growth,
                            growth_factor=factor, trace_relative=trace, level=level)


def _decide_by_growth(diag: PointDiagnostics, thresholds: Thresholds) -> str:
    if diag.growth["slow"] <= thresholds.growth_slow and diag.growth_factor["slow"] <= thresholds.growth_factor_slow:
        if diag.trace_relative is None or diag.trace_relative >= thresholds.trace_floor:
            return "slow"
        return "inconclusive"
    if diag.growth["ordinary"] <= thresholds.growth_ordinary:
        return "ordinary"
    if diag.growth["rapid"] <= thresholds.growth_rapid:
        return "rapid"
    return "inconclusive"


def decide(diag: PointDiagnostics, thresholds: Thresholds) -> str:
    if diag.level is None:
        return _decide_by_growth(diag, thresholds)
    if diag.level["slow"] <= thresholds.level_slow:
        if diag.trace_relative is None or diag.trace_relative >= thresholds.trace_floor:
            return "slow"
        return "inconclusive"
    if diag.growth["rapid"] > thresholds.growth_rapid:
        return "inconclusive"
    if diag.level["ordinary"] >= thresholds.level_rapid:
        return "rapid"
    return "ordinary"


def classify(path: SampledPath, coeffs: Optional[CoefficientArray], t: float, h: float,
             j_range: Tuple[int, int], thresholds: Thresholds = DEFAULT_THRESHOLDS,
             group: Optional[str] = None) -> PointClassification:
    """
    With coefficients, the terminal ratios are compared with the typical
    coefficient size: slow when the slow-modulus ratio stays below
    level_slow and the coefficient trace clears the floor, rapid when the
    ordinary-modulus ratio reaches level_rapid, ordinary in between, and
    inconclusive whenever even the rapid-modulus ratios keep growing.

    Passing coeffs=None (deterministic input) falls back to the growth of the
    running maxima: slow when the slow-modulus ratios stop growing, otherwise
    the first of ordinary / rapid whose ratios stop growing.
    """
    diag = point_features(path, coeffs, t, h, j_range, thresholds.terminal_window)
    return PointClassification(t=t, verdict=decide(diag, thresholds), group=group, diagnostics=diag)


def _separating_cut(low: Sequence[float], high: Sequence[float]) -> float:
    """Cut c maximizing min(P(low <= c), P(high > c)) over the pooled sample values."""
    low, high = np.sort(np.asarray(low, dtype=float)), np.sort(np.asarray(high, dtype=float))
    candidates = np.unique(np.concatenate([low, high]))
    below = np.searchsorted(low, candidates, side="right") / low.size
    above = 1.0 - np.searchsorted(high, candidates, side="right") / high.size
    score = np.minimum(below, above)
    best = np.flatnonzero(score == score.max())
    # midpoint of the tied plateau, then halfway to the next sample value
    i = int(best[best.size // 2])
    nxt = candidates[i + 1] if i + 1 < candidates.size else candidates[i]
    return float(0.5 * (candidates[i] + nxt))


def calibrate_thresholds(groups: Dict[str, List[PointDiagnostics]], quantile: float = 0.8,
                         base: Thresholds = DEFAULT_THRESHOLDS) -> Thresholds:
    """
    Freeze thresholds from pilot diagnostics at points of known type: `sieve`
    (slow), `random` (ordinary) and `argmax` (rapid). The level cuts are the
    values that best separate neighbouring groups; the growth bounds are loose
    upper quantiles.
    """
    missing = {"sieve", "random", "argmax"} - set(groups)
    if missing or any(not groups[g] for g in ("sieve", "random", "argmax")):
        raise EstimationError(f"Calibration needs non-empty sieve, random and argmax groups (missing {sorted(missing)})")

    def q(group: str, attr: str, kind: str, level: float = quantile) -> float:
        return float(np.quantile([getattr(d, attr)[kind] for d in groups[group]], level))

    def levels(group: str, kind: str) -> List[float]:
        return [d.level[kind] for d in groups[group] if d.level is not None]

    level_slow, level_rapid = base.level_slow, base.level_rapid
    if levels("sieve", "slow") and levels("random", "slow"):
        level_slow = _separating_cut(levels("sieve", "slow"), levels("random", "slow"))
    if levels("random", "ordinary") and levels("argmax", "ordinary"):
        level_rapid = _separating_cut(levels("random", "ordinary"), levels("argmax", "ordinary"))

    traces = [d.trace_relative for g in ("sieve", "random") for d in groups[g] if d.trace_relative is not None]
    trace_floor = 0.5 * float(np.quantile(traces, 1.0 - quantile)) if traces else base.trace_floor
    growth_rapid = max(q(g, "growth", "rapid", 0.95) for g in ("random", "argmax"))
    return Thresholds(
        terminal_window=base.terminal_window,
        growth_slow=max(q("sieve", "growth", "slow"), 0.0),
        growth_factor_slow=max(q("sieve", "growth_factor", "slow"), 1.0),
        growth_ordinary=q("random", "growth", "ordinary"),
        growth_rapid=growth_rapid,
        trace_floor=trace_floor,
        level_slow=level_slow,
        level_rapid=level_rapid,
        calibrated=True,
        source="pilot",
    )


class VarianceReport(BaseModel):
    h: float
    slope: float
    stderr: float
    intercept: float
    r_value: float
    lags: List[float]
    mean_squares: List[float]
    n_seeds: int
    points_per_seed: int


def variance_scaling(spec: WaveletSpec, h: float, lags: Sequence[int], n_seeds: int, base_seed: int = 0,
                     points_per_seed: int = 4, extra_scales: int = 6, min_seeds: int = 100) -> VarianceReport:
    """
    Log-log slope of E[(f_h(t + r) - f_h(t))^2] against r = 2^-p for p in lags,
    averaged over seed-keyed base points t.
    """
    if n_seeds < min_seeds:
        raise DomainError(f"variance_scaling needs at least {min_seeds} seeds, got {n_seeds}")
    lags = sorted(int(p) for p in lags)
    if len(lags) < 2 or lags[0] < 1:
        raise DomainError(f"Need at least two lag exponents >= 1, got {lags}")
    J = lags[-1] + extra_scales
    steps = np.ldexp(1.0, -np.asarray(lags))
    sums = np.zeros(len(lags))

    for seed in range(base_seed, base_seed + n_seeds):
        lattice = CoefficientLattice(seed)
        starts = np.asarray(random_interior_points(lattice, points_per_seed, J, 0.25))
        ts = np.concatenate([starts, (starts[:, None] + steps[None, :]).ravel()])
        f = synth_points(lattice, spec, h, ts, J, J)
        base = f[:points_per_seed]
        shifted = f[points_per_seed:].reshape(points_per_seed, len(lags))
        sums += ((shifted - base[:, None]) ** 2).sum(axis=0)

    msq = sums / (n_seeds * points_per_seed)
    fit = linregress(np.log(steps), np.log(msq))
    return VarianceReport(h=h, slope=float(fit.slope), stderr=float(fit.stderr), intercept=float(fit.intercept),
                          r_value=float(fit.rvalue), lags=steps.tolist(), mean_squares=msq.tolist(),
                          n_seeds=n_seeds, points_per_seed=points_per_seed)


def random_interior_points(lattice: CoefficientField, count: int, J_grid: int, margin: float,
                           slot_offset: int = 0) -> List[float]:
    """Seed-keyed grid points of [margin, 1 - margin]."""
    u = draw_points(lattice, count, slot_offset)
    t = margin + (1.0 - 2.0 * margin) * u
    return (np.floor(np.ldexp(t, J_grid)) * 2.0 ** -J_grid).tolist()
