"""
Experiment workflows behind the CLI commands, and the acceptance suites run by
`main.py check`.
"""

import json
import logging
import math
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from pydantic import BaseModel
from scipy import integrate
from scipy.stats import norm

from analysis import (
    Modulus,
    PointClassification,
    PointDiagnostics,
    Thresholds,
    calibrate_thresholds,
    classify,
    coefficient_trace,
    exponent_map,
    leader_exponent,
    leader_pyramid,
    load_thresholds,
    point_features,
    random_interior_points,
    ratio_profile,
    uniform_ratio,
    variance_scaling,
)
from config import ExperimentConfig, settings
from errors import ConfigError, EstimationError, HolderLabError
from models import CoefficientArray, SampledPath
from randomness import CoefficientLattice
from sieve import (
    SieveParams,
    brute_force_survivors,
    condition10_report,
    extract_slow_candidates,
    minimal_admissible_mu,
    retry_hint,
    run_sieve,
    survival_statistics,
    survival_table_from_counts,
    tightest_candidates,
    MIN_SURVIVAL_SEEDS,
)
from storage import (
    write_coefficients_csv,
    write_csv,
    write_json,
    write_path_binary,
    write_path_csv,
    write_table_csv,
)
from synthesis import (
    HurstFunction,
    baire_band_violations,
    baire_perturb,
    multifractional_coefficients,
    series_coefficients,
    synth_brownian,
    synth_fh,
    synth_fH,
    synth_prevalence_counterexample,
)
from wavelets import WaveletSpec, analyze, wavelet_table

logger = logging.getLogger(__name__)

T = TypeVar("T")
RANDOM_SLOT_OFFSET = 1000
# pilot calibration seeds sit far from the evaluation seeds
PILOT_SEED_OFFSET = 10_000
PILOT_SEEDS = 20
TABLE_RESOLUTION = 12
VERDICTS = ("slow", "ordinary", "rapid", "inconclusive")


def map_seeds(fn: Callable[[int], T], seeds: Sequence[int], workers: int = 1) -> List[T]:
    """Apply fn to each seed; results come back in seed order for any worker count."""
    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, seeds))
    return [fn(seed) for seed in seeds]


def make_lattice(config: ExperimentConfig, seed: int) -> CoefficientLattice:
    return CoefficientLattice(seed, config.law)


# ---------------------------------------------------------------- synth

def synthesize(config: ExperimentConfig, seed: int, workers: int = 1) -> Tuple[SampledPath, Optional[CoefficientArray]]:
    lattice = make_lattice(config, seed)
    spec = config.spec
    if config.series == "brownian":
        return synth_brownian(lattice, min(config.j_max, config.grid - 1), config.grid, workers=workers), None
    if config.series == "prevalence":
        series = synth_prevalence_counterexample(lattice, spec, config.h, config.block_list, config.j_max,
                                                 config.grid, config.window, workers=workers)
        return series.path, series.coefficients
    if config.series == "fH":
        H = config.hurst_function()
        path = synth_fH(lattice, spec, H, config.j_max, config.window, config.grid, workers=workers)
        return path, multifractional_coefficients(lattice, spec, H, config.j_max, config.window)
    path = synth_fh(lattice, spec, config.h, config.j_max, config.window, config.grid, workers=workers)
    return path, series_coefficients(lattice, spec, config.h, config.j_max, config.window)


def run_synth(config: ExperimentConfig, out_dir: Path, coefficients: bool = False, table: bool = False) -> List[Path]:
    written = []
    if table:
        spec = config.spec
        written.append(write_table_csv(out_dir / f"{spec.name}-table.csv", wavelet_table(spec, TABLE_RESOLUTION)))
    for seed in config.seeds:
        path, coeffs = synthesize(config, seed, config.workers)
        stem = out_dir / f"{config.series}-seed-{seed}"
        written.append(write_path_binary(stem.with_suffix(".bin"), path))
        written.append(write_path_csv(stem.with_suffix(".csv"), path))
        written.append(write_json(stem.with_suffix(".json"), {
            "provenance": path.provenance.model_dump(),
            "config": config.model_dump(exclude={"workers", "output_dir"}),
        }))
        if coefficients and coeffs is not None:
            written.append(write_coefficients_csv(out_dir / f"{config.series}-seed-{seed}-coefficients.csv", coeffs))
        logger.info("Synthesized %s seed=%d on %d points", config.series, seed, path.n)
    return written


# ---------------------------------------------------------------- sieve

def run_sieve_command(config: ExperimentConfig, out_dir: Path) -> Dict[str, Any]:
    params = config.sieve_params()
    report = condition10_report(params.m, params.mu)
    summary: Dict[str, Any] = {"params": params.model_dump(), "condition10": report.model_dump(),
                               "admissible": report.admissible}
    if not report.admissible:
        summary["suggested_mu"] = minimal_admissible_mu(params.m)
        logger.warning("(m=%d, mu=%d) is not admissible (value %.4g); suggested mu=%s",
                       params.m, params.mu, report.value, summary["suggested_mu"])
        write_json(out_dir / "sieve.json", summary)
        return summary

    states = map_seeds(lambda seed: run_sieve(make_lattice(config, seed), params), config.seeds, config.workers)
    first = states[0]
    write_csv(out_dir / "levels.csv", ["J", "N_J", "threshold", "survived"], first.level_rows())

    candidates = {}
    for seed, state in zip(config.seeds, states):
        ts = extract_slow_candidates(state)
        candidates[str(seed)] = {"candidates": ts, "diagnostic": None if ts else retry_hint(params)}
    write_json(out_dir / "candidates.json", {"J_cap": params.J_cap, "seeds": candidates})

    counts = [state.counts for state in states]
    table = survival_table_from_counts(config.seeds, counts, params, config.law)
    header = ["seed"] + [f"N_{J}" for J in range(params.J_cap + 1)] + ["survived"]
    write_csv(out_dir / "survival.csv", header, table.seed_rows())
    if len(config.seeds) >= MIN_SURVIVAL_SEEDS:
        write_csv(out_dir / "frequencies.csv", ["J", "threshold", "growth_frequency", "survival_frequency"],
                  table.frequency_rows())
    else:
        logger.info("Skipping frequency table: %d seeds (< %d)", len(config.seeds), MIN_SURVIVAL_SEEDS)
    summary["counts"] = {str(seed): row for seed, row in zip(config.seeds, counts)}
    write_json(out_dir / "sieve.json", summary)
    return summary


# ---------------------------------------------------------------- classify

def _interior_margin(config: ExperimentConfig) -> float:
    return 2.0 ** -(config.j_lo - 1)


def classification_points(config: ExperimentConfig, lattice: CoefficientLattice,
                          path: SampledPath) -> Dict[str, List[float]]:
    margin = _interior_margin(config)
    lo, hi = margin, 1.0 - margin
    points: Dict[str, List[float]] = {}
    for group in config.group_list:
        if group == "sieve":
            params = config.sieve_params()
            if params.J_cap + 1 > config.grid:
                raise ConfigError(f"J_cap={params.J_cap} too fine for J_grid={config.grid}", field="J_cap")
            points[group] = tightest_candidates(lattice, params, config.points_per_group, interior=(lo, hi))
        elif group == "random":
            points[group] = random_interior_points(lattice, config.points_per_group, config.grid, margin,
                                                   slot_offset=RANDOM_SLOT_OFFSET)
        else:
            best = uniform_ratio(path, Modulus(kind="rapid", h=config.h), config.analysis_top, interior=(lo, hi))
            points[group] = [best.t]
    return points


def _fh_series(config: ExperimentConfig, seed: int) -> Tuple[CoefficientLattice, SampledPath, CoefficientArray]:
    if config.series != "fh":
        raise ConfigError(f"Classification runs on series=fh, got {config.series}", field="series")
    lattice = make_lattice(config, seed)
    path = synth_fh(lattice, config.spec, config.h, config.j_max, (0.0, 1.0), config.grid)
    return lattice, path, series_coefficients(lattice, config.spec, config.h, config.j_max)


def seed_diagnostics(config: ExperimentConfig, seed: int) -> Dict[str, List[PointDiagnostics]]:
    lattice, path, coeffs = _fh_series(config, seed)
    j_range = (config.j_lo, config.analysis_top)
    return {
        group: [point_features(path, coeffs, t, config.h, j_range) for t in ts]
        for group, ts in classification_points(config, lattice, path).items()
    }


def classify_seed(config: ExperimentConfig, seed: int, thresholds: Thresholds) -> List[PointClassification]:
    lattice, path, coeffs = _fh_series(config, seed)
    j_range = (config.j_lo, config.analysis_top)
    return [
        classify(path, coeffs, t, config.h, j_range, thresholds, group=group)
        for group, ts in classification_points(config, lattice, path).items()
        for t in ts
    ]


class GroupSummary(BaseModel):
    group: str
    points: int
    fractions: Dict[str, float]
    median_terminal: Dict[str, float]


def summarize(results: Sequence[PointClassification], groups: Sequence[str]) -> List[GroupSummary]:
    rows = []
    for group in groups:
        members = [r for r in results if r.group == group]
        fractions = {v: (sum(r.verdict == v for r in members) / len(members) if members else 0.0) for v in VERDICTS}
        medians = {
            kind: float(np.median([r.diagnostics.terminal[kind] for r in members])) if members else math.nan
            for kind in ("slow", "ordinary", "rapid")
        }
        rows.append(GroupSummary(group=group, points=len(members), fractions=fractions, median_terminal=medians))
    return rows


def run_classify(config: ExperimentConfig, out_dir: Path) -> List[GroupSummary]:
    thresholds = load_thresholds(config.thresholds)
    per_seed = map_seeds(lambda seed: classify_seed(config, seed, thresholds), config.seeds, config.workers)
    results = [r for batch in per_seed for r in batch]
    if not results:
        raise EstimationError("No points to classify")
    summary = summarize(results, config.group_list)
    write_json(out_dir / "verdicts.json", {
        "thresholds": thresholds.model_dump(),
        "seeds": {str(seed): [r.model_dump() for r in batch] for seed, batch in zip(config.seeds, per_seed)},
        "summary": [row.model_dump() for row in summary],
    })
    header = ["group", "points"] + [f"frac_{v}" for v in VERDICTS] + [f"median_terminal_{k}" for k in ("slow", "ordinary", "rapid")]
    write_csv(out_dir / "summary.csv", header, [
        [row.group, row.points] + [row.fractions[v] for v in VERDICTS]
        + [row.median_terminal[k] for k in ("slow", "ordinary", "rapid")]
        for row in summary
    ])
    return summary


def pilot_thresholds(config: ExperimentConfig, seeds: Sequence[int]) -> Thresholds:
    per_seed = map_seeds(lambda seed: seed_diagnostics(config, seed), seeds, config.workers)
    groups: Dict[str, List[PointDiagnostics]] = {}
    for batch in per_seed:
        for group, diags in batch.items():
            groups.setdefault(group, []).extend(diags)
    return calibrate_thresholds(groups)


def run_calibration(config: ExperimentConfig, out_path: Path) -> Thresholds:
    thresholds = pilot_thresholds(config, config.seeds)
    write_json(out_path, {k: v for k, v in thresholds.model_dump().items() if k != "schema_version"})
    logger.info("Wrote calibrated thresholds to %s", out_path)
    return thresholds


# ---------------------------------------------------------------- scan

def scan_points(config: ExperimentConfig) -> List[float]:
    n = config.scan_points
    a, b = config.window
    step = 2.0 ** -config.grid
    return [math.floor((a + (b - a) * (i + 1) / (n + 1)) / step) * step for i in range(n)]


def series_coefficients_for(config: ExperimentConfig, lattice: CoefficientLattice) -> CoefficientArray:
    """Exact coefficients of the configured series, without synthesizing the path."""
    if config.series == "brownian":
        return series_coefficients(lattice, WaveletSpec(family="faber-schauder"), 0.5, config.j_max)
    if config.series == "prevalence":
        series = synth_prevalence_counterexample(lattice, config.spec, config.h, config.block_list, config.j_max,
                                                 config.j_max, config.window)
        return series.coefficients
    if config.series == "fH":
        return multifractional_coefficients(lattice, config.spec, config.hurst_function(), config.j_max, config.window)
    return series_coefficients(lattice, config.spec, config.h, config.j_max, config.window)


def run_scan(config: ExperimentConfig, out_dir: Path) -> Dict[str, Any]:
    H = config.hurst_function() if config.series == "fH" else None
    leader_top = config.j_max - config.margin
    j_range = (max(1, config.j_lo - 2), leader_top)
    ts = scan_points(config)

    def scan_seed(seed: int) -> Dict[str, Any]:
        lattice = make_lattice(config, seed)
        coeffs = series_coefficients_for(config, lattice)
        pyramid = leader_pyramid(coeffs, config.j_max, config.margin)
        estimates = exponent_map(pyramid, ts, j_range, H)
        entry: Dict[str, Any] = {"estimates": [e.model_dump() for e in estimates]}
        if config.series == "brownian":
            path = synth_brownian(lattice, config.grid - 1, config.grid)
            t = math.floor(0.5 * 2 ** config.grid) * 2.0 ** -config.grid
            profile = ratio_profile(path, t, Modulus(kind="ordinary", h=0.5), 3, config.grid - 1)
            entry["iterated_logarithm"] = {"t": t, "running_max": profile.running_max().tolist(),
                                           "terminal": profile.terminal(), "limit": math.sqrt(2.0)}
        return entry

    per_seed = map_seeds(scan_seed, config.seeds, config.workers)
    rows = []
    for seed, entry in zip(config.seeds, per_seed):
        for e in entry["estimates"]:
            rows.append([seed, e["t"], e["h_hat"], e["stderr"], e["target"], e["degenerate"]])
    write_csv(out_dir / "exponents.csv", ["seed", "t", "h_hat", "stderr", "target", "degenerate"], rows)
    payload = {"j_range": list(j_range), "series": config.series,
               "seeds": {str(seed): entry for seed, entry in zip(config.seeds, per_seed)}}
    write_json(out_dir / "scan.json", payload)
    return payload


# ---------------------------------------------------------------- acceptance suites

class SuiteResult(BaseModel):
    id: str
    title: str
    passed: bool
    measured: Dict[str, Any]


class CheckReport(BaseModel):
    schema_version: int = settings.SCHEMA_VERSION
    passed: bool
    suites: List[SuiteResult]


class AcceptanceSuite:
    id = ""
    title = ""

    def measure(self, config: ExperimentConfig) -> Tuple[bool, Dict[str, Any]]:
        raise NotImplementedError

    def run(self, config: ExperimentConfig) -> SuiteResult:
        started = time.perf_counter()
        try:
            passed, measured = self.measure(config)
        except HolderLabError:
            raise
        except Exception as e:
            raise HolderLabError(f"Error running suite {self.id}: {e}")
        logger.info("%s finished in %.1fs", self.id, time.perf_counter() - started)
        return SuiteResult(id=self.id, title=self.title, passed=bool(passed), measured=measured)


SUITES: Dict[str, type] = {}


def register(cls):
    SUITES[cls.id] = cls
    return cls


def get_suite(suite_id: str) -> AcceptanceSuite:
    try:
        return SUITES[suite_id.upper()]()
    except KeyError:
        raise ConfigError(f"Unknown suite '{suite_id}', expected one of {sorted(SUITES)}", field="only")


def _fraction(flags: Sequence[bool]) -> float:
    return float(np.mean(flags)) if len(flags) else 0.0


@register
class VarianceScalingSuite(AcceptanceSuite):
    id = "P1"
    title = "variance scaling slope 2h"

    def measure(self, config):
        measured, passed = {}, True
        for h in (0.3, 0.5, 0.7):
            report = variance_scaling(config.spec, h, range(5, 13), 200, base_seed=config.seed)
            measured[f"h={h}"] = {"slope": report.slope, "stderr": report.stderr}
            passed &= abs(report.slope - 2 * h) <= 0.1
        return passed, measured


@register
class BrownianModulusSuite(AcceptanceSuite):
    id = "P2"
    title = "Brownian uniform modulus"

    def measure(self, config):
        mod = Modulus(kind="rapid", h=0.5)

        def one(seed):
            path = synth_brownian(CoefficientLattice(seed), J_grid=16)
            return [uniform_ratio(path, mod, j).value for j in (14, 15, 16)]

        values = map_seeds(one, [config.seed + i for i in range(100)], config.workers)
        inside = [all(1.0 <= v <= 1.9 for v in row) for row in values]
        return _fraction(inside) >= 0.9, {"fraction_in_range": _fraction(inside),
                                           "median": float(np.median(values))}


@register
class SieveOracleSuite(AcceptanceSuite):
    id = "P3"
    title = "sieve against the literal definition"

    def measure(self, config):
        param_sets = [SieveParams(m=3, mu=config.mu, J_cap=8, J1=4),
                      SieveParams(m=2, mu=1, J_cap=8, J1=3)]
        mismatches = 0
        for seed in (config.seed + i for i in range(50)):
            lattice = CoefficientLattice(seed)
            for params in param_sets:
                state = run_sieve(lattice, params, require_admissible=False)
                oracle = brute_force_survivors(lattice, params)
                mismatches += sum(int(np.count_nonzero(state.nested[J] != oracle[J])) for J in oracle)
        return mismatches == 0, {"mismatches": mismatches}


@register
class SieveSurvivalSuite(AcceptanceSuite):
    id = "P4"
    title = "sieve survival at the minimal admissible mu"

    def measure(self, config):
        mu = minimal_admissible_mu(3)
        params = SieveParams(m=3, mu=mu, J_cap=14, J1=4, trim_edges=True)
        table = survival_statistics([config.seed + i for i in range(100)], params, workers=config.workers)
        monotone = all(np.diff(table.survival_frequency) <= 0) and all(np.diff(table.growth_frequency) <= 0)
        final = table.survival_frequency[-1]
        return final >= 0.5 and monotone, {"mu": mu, "survival_at_J_cap": final, "monotone": monotone}


@register
class SeparationSuite(AcceptanceSuite):
    id = "P5"
    title = "slow / ordinary / rapid separation"

    def measure(self, config):
        cfg = config.model_copy(update={"series": "fh", "h": 0.5, "j_max": 14, "J_grid": 18, "j_lo": 6,
                                        "j_hi": 14, "J_cap": 14, "groups": "sieve,random,argmax"})
        thresholds = load_thresholds(cfg.thresholds)
        if not thresholds.calibrated:
            pilot = [cfg.seed + PILOT_SEED_OFFSET + i for i in range(PILOT_SEEDS)]
            logger.info("Threshold fixture is uncalibrated; calibrating on pilot seeds %d..%d", pilot[0], pilot[-1])
            thresholds = pilot_thresholds(cfg, pilot)
        seeds = [cfg.seed + i for i in range(50)]
        per_seed = map_seeds(lambda seed: classify_seed(cfg, seed, thresholds), seeds, cfg.workers)
        results = [r for batch in per_seed for r in batch]
        rates = {
            "sieve": _fraction([r.verdict == "slow" for r in results if r.group == "sieve"]),
            "argmax": _fraction([r.verdict == "rapid" for r in results if r.group == "argmax"]),
            "random": _fraction([r.verdict == "ordinary" for r in results if r.group == "random"]),
        }
        paired = []
        for batch in per_seed:
            slow = [r.diagnostics.terminal["slow"] for r in batch if r.group == "sieve"]
            rand = [r.diagnostics.terminal["slow"] for r in batch if r.group == "random"]
            if slow and rand:
                paired.append(np.median(slow) < np.median(rand))
        passed = all(v >= 0.7 for v in rates.values()) and _fraction(paired) >= 0.8
        return passed, {"rates": rates, "paired_median_fraction": _fraction(paired),
                        "paired_runs": len(paired), "thresholds_source": thresholds.source}


@register
class RoundTripSuite(AcceptanceSuite):
    id = "P6"
    title = "analysis recovers synthesis coefficients"

    def measure(self, config):
        spec = WaveletSpec(family="daubechies", order=4)
        j_max, worst = 12, 0.0
        for seed in (config.seed + i for i in range(10)):
            lattice = CoefficientLattice(seed)
            path = synth_fh(lattice, spec, 0.5, j_max, (0.0, 1.0), j_max + 4)
            recovered = analyze(path, spec, j_max - 4)
            exact = series_coefficients(lattice, spec, 0.5, j_max)
            for j, k, c in recovered.entries():
                e = exact.get(j, k)
                if e != 0.0:
                    worst = max(worst, abs(c - e) / abs(e))
        return worst < 1e-3, {"max_relative_error": worst}


def quadrature_condition10(m: int, mu: float, terms: int = 12) -> float:
    """The admissibility sum with band probabilities from adaptive quadrature of the Gaussian density."""
    total = 0.0
    for l in range(terms):
        a, b = mu * 2.0 ** l, mu * 2.0 ** (l + 1)
        p = 2.0 * integrate.quad(norm.pdf, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        total += (2.0 ** (m * l + 1) + 1.0) * (p + l * math.sqrt(max(p * (1.0 - p), 0.0)))
    return total


@register
class Condition10Suite(AcceptanceSuite):
    id = "P7"
    title = "admissibility sum evaluator"

    def measure(self, config):
        measured, passed = {}, True
        for m in (2, 3, 4):
            values = [condition10_report(m, mu).value for mu in range(1, 21)]
            decreasing = all(b < a for a, b in zip(values, values[1:]))
            mu_star = minimal_admissible_mu(m)
            oracle = next(mu for mu in range(1, 65) if quadrature_condition10(m, mu) < 0.25)
            measured[f"m={m}"] = {"decreasing": decreasing, "mu_star": mu_star, "quadrature_mu_star": oracle}
            passed &= decreasing and mu_star == oracle
        return passed, measured


@register
class MultifractionalSuite(AcceptanceSuite):
    id = "P8"
    title = "leader exponents track H(t) = 0.4 + 0.2 t"

    def measure(self, config):
        H = HurstFunction.parse("linear:0.4,0.2")
        spec = config.spec
        j_max, margin = 16, 4

        def one(seed):
            coeffs = multifractional_coefficients(CoefficientLattice(seed), spec, H, j_max)
            pyramid = leader_pyramid(coeffs, j_max, margin)
            return [leader_exponent(pyramid, t, (4, j_max - margin)).h_hat for t in (0.25, 0.75)]

        estimates = map_seeds(one, [config.seed + i for i in range(50)], config.workers)
        close = [abs(a - 0.45) <= 0.15 and abs(b - 0.55) <= 0.15 for a, b in estimates]
        ordered = [b > a for a, b in estimates]
        return _fraction(close) >= 0.7 and _fraction(ordered) >= 0.8, {
            "within_tolerance": _fraction(close), "ordered": _fraction(ordered),
            "median_h_025": float(np.median([a for a, _ in estimates])),
            "median_h_075": float(np.median([b for _, b in estimates])),
        }


@register
class TraceFloorSuite(AcceptanceSuite):
    id = "P9"
    title = "coefficient trace lower bound"

    def measure(self, config):
        floor = 2.0 ** -1.5 * math.sqrt(math.pi)
        hits = []
        for seed in (config.seed + i for i in range(100)):
            lattice = CoefficientLattice(seed)
            for t in random_interior_points(lattice, 5, 30, 0.0, slot_offset=RANDOM_SLOT_OFFSET):
                trace = coefficient_trace(lattice, t, 0.5, Modulus(kind="slow", h=0.5), (0, 16))
                hits.append(trace.summary > floor)
        return _fraction(hits) >= 0.95, {"fraction_above_floor": _fraction(hits), "pairs": len(hits)}


@register
class PrevalenceSuite(AcceptanceSuite):
    id = "P10"
    title = "prevalence counterexample and Baire perturbation"

    def measure(self, config):
        spec = config.spec
        h, blocks, j_max = 0.5, [3, 8, 16], 16
        checked = [j for j in blocks if 8 <= j <= 14]

        def one(seed):
            series = synth_prevalence_counterexample(CoefficientLattice(seed, "uniform"), spec, h, blocks,
                                                     j_max, J_grid=j_max)
            pyramid = leader_pyramid(series.coefficients, j_max, margin=0)
            large = all(
                np.nanmin(pyramid.leaders.lookup(j, np.arange(1 << j))[0]) > 2.0 ** (-h * j)
                for j in checked
            )
            perturbed = baire_perturb(series.coefficients, h, J0=4)
            return large, baire_band_violations(series.coefficients, perturbed, h, J0=4)

        results = map_seeds(one, [config.seed + i for i in range(50)], config.workers)
        large = _fraction([r[0] for r in results])
        violations = sum(r[1] for r in results)
        return large >= 0.9 and violations == 0, {"blocks_checked": checked, "large_leader_fraction": large,
                                                  "band_violations": violations}


def _digest_dir(root: Path) -> Dict[str, bytes]:
    out = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        data = path.read_bytes()
        if path.suffix == ".json":
            document = json.loads(data)
            document.get("provenance", {}).pop("created_at", None)
            data = json.dumps(document, sort_keys=True).encode("utf-8")
        out[str(path.relative_to(root))] = data
    return out


@register
class DeterminismSuite(AcceptanceSuite):
    id = "P11"
    title = "byte-reproducible commands across runs and thread counts"

    def measure(self, config):
        small = config.model_copy(update={"series": "fh", "n_seeds": 2, "j_max": 12, "J_grid": 16,
                                          "j_lo": 5, "j_hi": 12, "J_cap": 10, "scan_points": 5})
        commands = {
            "synth": lambda cfg, out: run_synth(cfg, out, coefficients=True),
            "sieve": run_sieve_command,
            "classify": run_classify,
            "scan": run_scan,
        }
        measured, passed = {}, True
        with tempfile.TemporaryDirectory() as tmp:
            for name, command in commands.items():
                digests = []
                for run, workers in enumerate((1, 1, 8)):
                    out = Path(tmp) / name / str(run)
                    command(small.model_copy(update={"workers": workers}), out)
                    digests.append(_digest_dir(out))
                same = digests[0] == digests[1] == digests[2]
                measured[name] = {"identical": same, "files": len(digests[0])}
                passed &= same
        return passed, measured


def run_checks(config: ExperimentConfig, only: Optional[Sequence[str]] = None) -> CheckReport:
    ids = list(only) if only else list(SUITES)
    suites = [get_suite(suite_id) for suite_id in ids]
    results = [suite.run(config) for suite in suites]
    return CheckReport(passed=all(r.passed for r in results), suites=results)
