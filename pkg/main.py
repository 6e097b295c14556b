#!/usr/bin/env python3
"""
holderlab command line.

    python main.py synth     --seed 7 --h 0.5 --j-max 12
    python main.py sieve     --seeds 100 --m 3 --mu 3
    python main.py classify  --seeds 10
    python main.py scan      --series fH --hurst linear:0.4,0.2
    python main.py check     --only P6

Exit codes: 0 success, 1 failed suite or runtime error, 2 configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from config import ExperimentConfig, settings, setup_logging
from errors import HolderLabError
from experiments import run_calibration, run_checks, run_classify, run_scan, run_sieve_command, run_synth
from storage import write_json

logger = logging.getLogger("holderlab")

# flag dest -> ExperimentConfig field
FLAG_FIELDS = {
    "seed": "seed", "seeds": "n_seeds", "law": "law", "series": "series", "wavelet": "wavelet", "h": "h",
    "hurst": "hurst", "j_max": "j_max", "J_grid": "J_grid", "blocks": "blocks", "m": "m", "mu": "mu",
    "J1": "J1", "J_cap": "J_cap", "j_lo": "j_lo", "j_hi": "j_hi", "margin": "margin",
    "points": "points_per_group", "groups": "groups", "scan_points": "scan_points",
    "thresholds": "thresholds", "out": "output_dir", "workers": "workers",
}


def _default(name: str) -> Any:
    field = ExperimentConfig.model_fields[name]
    return "required" if field.is_required() else field.default


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    d = _default
    parser.add_argument("--config", default=None, help=f"key-value config file (default: {settings.CONFIG_PATH})")
    parser.add_argument("--log-level", default=None, help=f"log level (default: {settings.LOG_LEVEL})")

    group = parser.add_argument_group("randomness")
    group.add_argument("--seed", default=None, help=f"base seed, decimal or 0x hex (default: {d('seed')})")
    group.add_argument("--seeds", type=int, default=None, help=f"number of consecutive seeds (default: {d('n_seeds')})")
    group.add_argument("--law", choices=["gaussian", "uniform"], default=None, help=f"coefficient law (default: {d('law')})")

    group = parser.add_argument_group("series")
    group.add_argument("--series", choices=["fh", "fH", "brownian", "prevalence"], default=None,
                       help=f"series to synthesize (default: {d('series')})")
    group.add_argument("--wavelet", default=None, help=f"db2..db10 or faber-schauder (default: {d('wavelet')})")
    group.add_argument("--h", type=float, default=None, help=f"exponent in (0, 1) (default: {d('h')})")
    group.add_argument("--hurst", default=None, help=f"H descriptor constant:a | linear:a,b | sine:a,b (default: {d('hurst')})")
    group.add_argument("--j-max", dest="j_max", type=int, default=None, help=f"finest scale (default: {d('j_max')})")
    group.add_argument("--J-grid", dest="J_grid", type=int, default=None, help="grid scale (default: j_max + 4)")
    group.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"), default=None,
                       help=f"sampling window (default: {d('window_lo')} {d('window_hi')})")
    group.add_argument("--blocks", default=None, help=f"scale blocks of the prevalence series (default: {d('blocks')})")

    group = parser.add_argument_group("sieve")
    group.add_argument("--m", type=int, default=None, help=f"reach exponent (default: {d('m')})")
    group.add_argument("--mu", type=int, default=None, help=f"band threshold (default: {d('mu')})")
    group.add_argument("--J1", type=int, default=None, help=f"warm-up level (default: {d('J1')})")
    group.add_argument("--J-cap", dest="J_cap", type=int, default=None, help=f"last sieve level (default: {d('J_cap')})")
    group.add_argument("--no-trim", dest="trim_edges", action="store_false", default=None,
                       help=f"keep the edge intervals (default trim: {d('trim_edges')})")

    group = parser.add_argument_group("analysis")
    group.add_argument("--j-lo", dest="j_lo", type=int, default=None, help=f"coarsest analysis scale (default: {d('j_lo')})")
    group.add_argument("--j-hi", dest="j_hi", type=int, default=None, help="finest analysis scale (default: J_grid - margin)")
    group.add_argument("--margin", type=int, default=None, help=f"scales kept clear below J_grid (default: {d('margin')})")
    group.add_argument("--points", type=int, default=None, help=f"points per group (default: {d('points_per_group')})")
    group.add_argument("--groups", default=None, help=f"point groups (default: {d('groups')})")
    group.add_argument("--scan-points", dest="scan_points", type=int, default=None,
                       help=f"points in the exponent map (default: {d('scan_points')})")
    group.add_argument("--thresholds", default=None, help=f"classifier threshold fixture (default: {d('thresholds')})")

    group = parser.add_argument_group("output")
    group.add_argument("--out", default=None, help=f"output directory (default: {d('output_dir')})")
    group.add_argument("--workers", type=int, default=None, help=f"worker threads (default: {d('workers')})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holderlab", description="Random wavelet series and their slow points")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthesize sample paths")
    _add_experiment_flags(synth)
    synth.add_argument("--coefficients", action="store_true", help="also write the exact coefficients (default: off)")
    synth.add_argument("--table", action="store_true",
                       help="also write the wavelet on the dyadic grid of resolution 12 (default: off)")

    sieve = sub.add_parser("sieve", help="run the slow-point sieve")
    _add_experiment_flags(sieve)

    classify = sub.add_parser("classify", help="classify sieve, random and argmax points")
    _add_experiment_flags(classify)

    scan = sub.add_parser("scan", help="leader exponent map")
    _add_experiment_flags(scan)

    check = sub.add_parser("check", help="run the acceptance suites")
    _add_experiment_flags(check)
    check.add_argument("--only", action="append", default=None, help="suite id, repeatable or comma separated (default: all)")
    check.add_argument("--calibrate", action="store_true",
                       help="run the classification pilot and rewrite the threshold fixture (default: off)")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {field: getattr(args, dest) for dest, field in FLAG_FIELDS.items() if getattr(args, dest, None) is not None}
    if args.trim_edges is not None:
        overrides["trim_edges"] = args.trim_edges
    if args.window is not None:
        overrides["window_lo"], overrides["window_hi"] = args.window
    return overrides


def _out(config: ExperimentConfig, command: str) -> Path:
    return Path(config.output_dir) / command


def cmd_synth(config: ExperimentConfig, args: argparse.Namespace) -> int:
    try:
        written = run_synth(config, _out(config, "synth"), coefficients=args.coefficients, table=args.table)
    except HolderLabError:
        raise
    except Exception as e:
        raise HolderLabError(f"Error synthesizing paths: {e}")
    logger.info("Wrote %d files to %s", len(written), _out(config, "synth"))
    return 0


def cmd_sieve(config: ExperimentConfig, args: argparse.Namespace) -> int:
    try:
        summary = run_sieve_command(config, _out(config, "sieve"))
    except HolderLabError:
        raise
    except Exception as e:
        raise HolderLabError(f"Error running sieve: {e}")
    print(f"condition10={summary['condition10']['value']:.6g} admissible={str(summary['admissible']).lower()}")
    if not summary["admissible"]:
        print(f"suggested mu={summary['suggested_mu']}")
    return 0


def cmd_classify(config: ExperimentConfig, args: argparse.Namespace) -> int:
    try:
        summary = run_classify(config, _out(config, "classify"))
    except HolderLabError:
        raise
    except Exception as e:
        raise HolderLabError(f"Error classifying points: {e}")
    for row in summary:
        fractions = " ".join(f"{v}={row.fractions[v]:.2f}" for v in row.fractions)
        print(f"{row.group:8s} n={row.points:3d} {fractions}")
    return 0


def cmd_scan(config: ExperimentConfig, args: argparse.Namespace) -> int:
    try:
        run_scan(config, _out(config, "scan"))
    except HolderLabError:
        raise
    except Exception as e:
        raise HolderLabError(f"Error scanning exponents: {e}")
    return 0


def cmd_check(config: ExperimentConfig, args: argparse.Namespace) -> int:
    if args.calibrate:
        thresholds = run_calibration(config, Path(config.thresholds))
        print(f"✅ thresholds written to {config.thresholds} ({thresholds.source})")
        return 0
    only: Optional[List[str]] = None
    if args.only:
        only = [part.strip() for item in args.only for part in item.split(",") if part.strip()]
    report = run_checks(config, only)
    for suite in report.suites:
        mark = "✅" if suite.passed else "❌"
        print(f"{mark} {suite.id} {suite.title}: {suite.measured}")
    write_json(_out(config, "check") / "report.json", report.model_dump(exclude={"schema_version"}))
    return 0 if report.passed else 1


COMMANDS = {"synth": cmd_synth, "sieve": cmd_sieve, "classify": cmd_classify, "scan": cmd_scan, "check": cmd_check}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = ExperimentConfig.load(args.config, overrides=_overrides(args))
        return COMMANDS[args.command](config, args)
    except HolderLabError as e:
        print(f"holderlab: {e.detail}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
