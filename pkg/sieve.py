"""
Slow-point sieve.

At level j the coefficient xi_{j,k'} with |xi| in the band (2^l mu, 2^{l+1} mu]
removes every position k with |k - k'| <= 2^{ml}. The surviving positions I_j
are intersected across levels through the dyadic tree; the scale-J intervals
that survive every level j <= J are counted as N_J.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.ndimage import maximum_filter1d
from scipy.special import erfc

from errors import DomainError
from randomness import CoefficientField, CoefficientLattice, Law

logger = logging.getLogger(__name__)

ADMISSIBLE_BOUND = 0.25
TERM_FLOOR = 1e-16
MAX_TERMS = 400
MIN_SURVIVAL_SEEDS = 30
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def p_l(mu: float, l: int) -> float:
    """P(2^l mu < |xi| <= 2^{l+1} mu) for a standard Gaussian xi."""
    if mu < 1:
        raise DomainError(f"mu must be at least 1, got {mu}")
    if l < 0:
        raise DomainError(f"Band index must be non-negative, got l={l}")
    lower = math.ldexp(mu, l)
    return float(erfc(lower * _INV_SQRT2) - erfc(2.0 * lower * _INV_SQRT2))


def _tail_mass(mu: float, l: int) -> float:
    return float(erfc(math.ldexp(mu, l) * _INV_SQRT2))


def _term(m: int, l: int, p: float) -> float:
    return (2.0 ** (m * l + 1) + 1.0) * (p + l * math.sqrt(p * (1.0 - p)))


def _term_bound(m: int, mu: float, l: int) -> float:
    # p_l <= P(|xi| > 2^l mu) and the term is increasing in p on [0, 1/2]
    return _term(m, l, min(_tail_mass(mu, l), 0.5))


class Condition10Report(BaseModel):
    m: int
    mu: float
    value: float
    partial_sum: float
    tail_bound: float
    terms: List[float]
    admissible: bool
    diverged: bool = False
    diagnostic: Optional[str] = None


def condition10_report(m: int, mu: float) -> Condition10Report:
    """
    sum_l (2^{ml+1} + 1)(p_l + l sqrt(p_l (1 - p_l))), truncated once a term and
    the bound on the next one are both below 1e-16. The remaining tail is bounded
    by twice the next-term bound once the bounds at least halve from there on.
    """
    if m < 2:
        raise DomainError(f"m must be at least 2, got {m}")
    if mu < 1:
        raise DomainError(f"mu must be at least 1, got {mu}")

    terms: List[float] = []
    partial = 0.0
    for l in range(MAX_TERMS):
        term = _term(m, l, p_l(mu, l))
        if not math.isfinite(term):
            break
        terms.append(term)
        partial += term
        nxt, after = _term_bound(m, mu, l + 1), _term_bound(m, mu, l + 2)
        if term < TERM_FLOOR and nxt < TERM_FLOOR and after <= nxt / 2.0:
            tail = 2.0 * nxt
            value = partial + tail
            return Condition10Report(m=m, mu=mu, value=value, partial_sum=partial, tail_bound=tail,
                                     terms=terms, admissible=value < ADMISSIBLE_BOUND)
    message = f"Series for m={m}, mu={mu} did not settle after {len(terms)} terms"
    logger.warning(message)
    return Condition10Report(m=m, mu=mu, value=math.inf, partial_sum=partial, tail_bound=math.inf,
                             terms=terms, admissible=False, diverged=True, diagnostic=message)


def condition10(m: int, mu: float) -> float:
    return condition10_report(m, mu).value


def minimal_admissible_mu(m: int, mu_max: int = 64) -> Optional[int]:
    """Smallest integer mu with condition10(m, mu) < 1/4, scanning 1..mu_max."""
    for mu in range(1, mu_max + 1):
        if condition10_report(m, mu).admissible:
            return mu
    return None


class SieveParams(BaseModel):
    m: int = Field(default=3, ge=2)
    mu: int = Field(default=3, ge=1)
    J_cap: int = Field(default=14, ge=0, le=24)
    J1: int = Field(default=4, ge=0)
    trim_edges: bool = True
    h: float = Field(default=0.5, gt=0.0, lt=1.0)
    # smallest exponent of a multifractional K; the condition h >= 1/m then applies to it
    inf_K: Optional[float] = Field(default=None, gt=0.0, lt=1.0)

    @property
    def exponent(self) -> float:
        return self.h if self.inf_K is None else min(self.h, self.inf_K)

    @model_validator(mode="after")
    def _check(self):
        if self.exponent * self.m < 1.0:
            name = "h" if self.exponent == self.h else "inf K"
            raise DomainError(f"m={self.m} too small for {name}={self.exponent}: need {name} >= 1/m")
        if self.J1 > self.J_cap:
            raise DomainError(f"Warm-up level J1={self.J1} exceeds J_cap={self.J_cap}")
        if self.trim_edges and self.J1 < 1:
            raise DomainError("Edge trimming needs J1 >= 1")
        return self

    def condition10(self) -> Condition10Report:
        return condition10_report(self.m, self.mu)

    @property
    def admissible(self) -> bool:
        return self.condition10().admissible


@dataclass
class SieveState:
    params: SieveParams
    seed: Optional[int]
    level_survivors: Dict[int, np.ndarray] = field(default_factory=dict)
    nested: Dict[int, np.ndarray] = field(default_factory=dict)
    consumed: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def counts(self) -> List[int]:
        return [int(np.count_nonzero(self.nested[J])) for J in sorted(self.nested)]

    def survivors(self, J: int) -> np.ndarray:
        """Positions k of the surviving scale-J intervals."""
        return np.flatnonzero(self.nested[J])

    def level_rows(self) -> List[tuple]:
        """(J, N_J, (3/2)^J, N_J >= 1) per level."""
        return [(J, n, 1.5 ** J, n >= 1) for J, n in enumerate(self.counts)]


def _global_band(m: int, j: int) -> int:
    """Smallest l whose reach 2^{ml} covers every pair of positions at level j."""
    span = (1 << j) - 1
    l = 0
    while (1 << (m * l)) < span:
        l += 1
    return l


def level_survivors(xi: np.ndarray, m: int, mu: float, j: int) -> np.ndarray:
    """Boolean mask of I_j over k = 0, ..., 2^j - 1 given the level-j variates."""
    size = 1 << j
    a = np.abs(xi)
    alive = np.ones(size, dtype=bool)
    l_global = _global_band(m, j)
    if np.any(a > math.ldexp(mu, l_global)):
        alive[:] = False
        return alive
    removed = np.zeros(size + 1, dtype=np.int64)
    for l in range(l_global):
        band = np.flatnonzero((a > math.ldexp(mu, l)) & (a <= math.ldexp(mu, l + 1)))
        if band.size == 0:
            continue
        reach = 1 << (m * l)
        np.add.at(removed, np.maximum(band - reach, 0), 1)
        np.add.at(removed, np.minimum(band + reach, size - 1) + 1, -1)
    alive &= np.cumsum(removed[:-1]) == 0
    return alive


def _edge_mask(J: int, J1: int) -> np.ndarray:
    keep = np.ones(1 << J, dtype=bool)
    shift = J - J1
    width = 1 << shift
    keep[:width] = False
    keep[-width:] = False
    return keep


def run_sieve(lattice: CoefficientField, params: SieveParams, require_admissible: bool = True) -> SieveState:
    if require_admissible:
        report = params.condition10()
        if not report.admissible:
            raise DomainError(
                f"(m={params.m}, mu={params.mu}) is not admissible: condition value {report.value:.4g} >= 1/4"
            )
    state = SieveState(params=params, seed=getattr(lattice, "seed", None))
    previous = None
    for j in range(params.J_cap + 1):
        xi = lattice.values(j, np.arange(1 << j, dtype=np.int64))
        alive = level_survivors(xi, params.m, params.mu, j)
        nested = alive.copy() if previous is None else alive & np.repeat(previous, 2)
        if params.trim_edges and j >= params.J1:
            nested &= _edge_mask(j, params.J1)
        state.consumed[j] = xi
        state.level_survivors[j] = alive
        state.nested[j] = nested
        previous = nested
    logger.debug("Sieve seed=%s counts=%s", state.seed, state.counts)
    return state


def brute_force_survivors(lattice: CoefficientField, params: SieveParams) -> Dict[int, np.ndarray]:
    """
    Literal check of the survivor definition: scale-J interval k survives iff
    for every level j <= J, its ancestor position at level j meets no band set
    within reach, and (when trimming) it does not descend from an edge interval.
    """
    per_level: Dict[int, np.ndarray] = {}
    for j in range(params.J_cap + 1):
        size = 1 << j
        a = np.abs(lattice.values(j, np.arange(size, dtype=np.int64)))
        top = 0
        while math.ldexp(params.mu, top) < a.max():
            top += 1
        ok = np.ones(size, dtype=bool)
        for k in range(size):
            for l in range(top + 1):
                reach = 1 << (params.m * l)
                lo, hi = max(k - reach, 0), min(k + reach, size - 1)
                window = a[lo:hi + 1]
                if np.any((window > math.ldexp(params.mu, l)) & (window <= math.ldexp(params.mu, l + 1))):
                    ok[k] = False
                    break
        per_level[j] = ok

    out: Dict[int, np.ndarray] = {}
    for J in range(params.J_cap + 1):
        ks = np.arange(1 << J, dtype=np.int64)
        keep = np.ones(ks.size, dtype=bool)
        for j in range(J + 1):
            keep &= per_level[j][ks >> (J - j)]
        if params.trim_edges and J >= params.J1:
            ancestor = ks >> (J - params.J1)
            keep &= (ancestor != 0) & (ancestor != (1 << params.J1) - 1)
        out[J] = keep
    return out


def retry_hint(params: SieveParams) -> str:
    return (f"No interval survives to J_cap={params.J_cap} with mu={params.mu}; "
            f"retry with a larger mu (e.g. mu={params.mu + 1})")


def extract_slow_candidates(state: SieveState) -> List[float]:
    """Sorted midpoints (k + 1/2) 2^-J_cap of the surviving scale-J_cap intervals."""
    J = state.params.J_cap
    ks = state.survivors(J)
    if ks.size == 0:
        logger.warning(retry_hint(state.params))
        return []
    return [math.ldexp(2 * int(k) + 1, -(J + 1)) for k in ks]


def level_margins(xi: np.ndarray, m: int, j: int) -> np.ndarray:
    """
    Smallest mu at which each position of level j lies in I_j:
    max over l of 2^-l times the largest |xi| within distance 2^{ml}.
    """
    size = 1 << j
    a = np.abs(xi)
    out = np.zeros(size)
    for l in range(_global_band(m, j) + 1):
        reach = min(1 << (m * l), size)
        window = maximum_filter1d(a, size=2 * reach + 1, mode="constant", cval=0.0)
        out = np.maximum(out, np.ldexp(window, -l))
    return out


def survival_margins(lattice: CoefficientField, params: SieveParams) -> np.ndarray:
    """Per scale-J_cap interval, the smallest mu it survives with; inf on trimmed edges."""
    J = params.J_cap
    ks = np.arange(1 << J, dtype=np.int64)
    margin = np.zeros(ks.size)
    for j in range(J + 1):
        xi = lattice.values(j, np.arange(1 << j, dtype=np.int64))
        margin = np.maximum(margin, level_margins(xi, params.m, j)[ks >> (J - j)])
    if params.trim_edges and J >= params.J1:
        margin[~_edge_mask(J, params.J1)] = np.inf
    return margin


def tightest_candidates(lattice: CoefficientField, params: SieveParams, count: int,
                        interior: Tuple[float, float] = (0.0, 1.0),
                        require_admissible: bool = True) -> List[float]:
    """
    Midpoints of up to count surviving scale-J_cap intervals inside interior, those
    with the smallest survival margin first, returned sorted.
    """
    if require_admissible and not params.admissible:
        raise DomainError(f"(m={params.m}, mu={params.mu}) is not admissible")
    J = params.J_cap
    margin = survival_margins(lattice, params)
    mids = np.ldexp(2.0 * np.arange(1 << J) + 1.0, -(J + 1))
    lo, hi = interior
    ks = np.flatnonzero((margin <= params.mu) & (mids >= lo) & (mids <= hi))
    if ks.size == 0:
        logger.warning(retry_hint(params))
        return []
    chosen = ks[np.argsort(margin[ks], kind="stable")[:count]]
    return sorted(float(mids[k]) for k in chosen)


class SurvivalTable(BaseModel):
    params: SieveParams
    law: str
    seeds: List[int]
    counts: List[List[int]]
    growth_frequency: List[float]
    survival_frequency: List[float]

    def seed_rows(self) -> List[list]:
        return [[seed, *row, row[-1] >= 1] for seed, row in zip(self.seeds, self.counts)]

    def frequency_rows(self) -> List[list]:
        return [
            [J, 1.5 ** J, g, s]
            for J, (g, s) in enumerate(zip(self.growth_frequency, self.survival_frequency))
        ]


def survival_statistics(seeds: Sequence[int], params: SieveParams, law: Law = "gaussian",
                        workers: int = 1) -> SurvivalTable:
    """
    Per-J frequencies of {N_j >= (3/2)^j for every j <= J} and {N_J >= 1}.
    Both events shrink with J, so both columns are non-increasing.
    """
    seeds = list(seeds)
    if len(seeds) < MIN_SURVIVAL_SEEDS:
        raise DomainError(f"Survival statistics need at least {MIN_SURVIVAL_SEEDS} seeds, got {len(seeds)}")

    def counts_for(seed: int) -> List[int]:
        return run_sieve(CoefficientLattice(seed, law), params).counts

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(counts_for, seeds))
    else:
        counts = [counts_for(seed) for seed in seeds]
    return survival_table_from_counts(seeds, counts, params, law)


def survival_table_from_counts(seeds: Sequence[int], counts: Sequence[Sequence[int]], params: SieveParams,
                               law: str = "gaussian") -> SurvivalTable:
    seeds, counts = list(seeds), [list(row) for row in counts]
    table = np.array(counts, dtype=np.int64)
    thresholds = 1.5 ** np.arange(params.J_cap + 1)
    growth = np.logical_and.accumulate(table >= thresholds, axis=1)
    survived = table >= 1
    return SurvivalTable(
        params=params,
        law=law,
        seeds=seeds,
        counts=counts,
        growth_frequency=growth.mean(axis=0).tolist(),
        survival_frequency=survived.mean(axis=0).tolist(),
    )
