"""Command-line interface.

``condspec scenario --config PATH``   run a Monte Carlo scenario (or sweep)
``condspec gci-sweep --config PATH``  run a Gaussian correlation inequality sweep
``condspec list-dgps``                list data-generating families

Exit status: 0 on success, 2 for configuration errors, 3 for engine errors.
The run manifest is written as one JSON line to stderr (or to
``--manifest PATH``) so that the report itself depends only on the config.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime, timezone

from . import __version__
from .conditional_mc import DEFAULT_BLOCKS, default_workers, run_scenario
from .config import GciSweepConfig, ScenarioSweep, config_digest, load_config, with_seed
from .dgp import FAMILIES, MIN_N, DgpParams, true_beta
from .errors import CondSpecError, ConfigError, ValidationError
from .gci import random_sweep
from .reporting import FORMATS, RunManifest, emit_report

__all__ = ["main", "build_parser", "run"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENGINE = 3


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="condspec", description="Conditional inference after specification tests.")
    parser.add_argument("--version", action="version", version=f"condspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("scenario", "run a Monte Carlo scenario or sweep"),
                            ("gci-sweep", "run a Gaussian correlation inequality sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--workers", type=_positive_int, default=default_workers(), metavar="N")
        p.add_argument("--format", choices=FORMATS, default="table")
        p.add_argument("--out", metavar="PATH", default=None)
        p.add_argument("--seed", type=_seed, default=None, metavar="U64")
        p.add_argument("--manifest", metavar="PATH", default=None)
    p = sub.add_parser("list-dgps", help="list data-generating families")
    p.add_argument("--format", choices=("table", "json"), default="table")
    return parser


def run(config, workers: int = 1):
    """Run a parsed config; returns ``(reports, manifest)``."""
    started = datetime.now(timezone.utc).isoformat()
    if isinstance(config, GciSweepConfig):
        reports = random_sweep(config.dim_max, config.cases, config.draws, config.master_seed, workers)
    else:
        configs = config.configs if isinstance(config, ScenarioSweep) else (config,)
        reports = [run_scenario(c, workers) for c in configs]
    manifest = RunManifest(config_digest(config), __version__, started,
                           datetime.now(timezone.utc).isoformat(), workers)
    return reports, manifest


def _list_dgps(fmt, out):
    rows = []
    for fam in FAMILIES:
        params = DgpParams(family=fam)
        rows.append({"family": fam, "tests": ",".join(DEFAULT_BLOCKS[fam]),
                     "beta0": [float(b) for b in true_beta(params)], "min_n": MIN_N[fam]})
    if fmt == "json":
        out.write(json.dumps(rows, indent=2) + "\n")
        return
    out.write(f"{'family':<16}{'moment blocks':<22}{'beta0':<16}min_n\n")
    for r in rows:
        beta = ",".join(f"{b:g}" for b in r["beta0"])
        out.write(f"{r['family']:<16}{r['tests']:<22}{beta:<16}{r['min_n']}\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list-dgps":
        _list_dgps(args.format, sys.stdout)
        return EXIT_OK
    try:
        config = load_config(args.config)
        is_gci = isinstance(config, GciSweepConfig)
        if is_gci != (args.command == "gci-sweep"):
            want = "a gci" if args.command == "gci-sweep" else "a scenario"
            raise ValidationError("config", f"{args.command} needs {want} document")
        if args.seed is not None:
            config = with_seed(config, args.seed)
    except ConfigError as exc:
        print(f"condspec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"condspec: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        reports, manifest = run(config, args.workers)
        kind = "gci" if is_gci else "scenario"
        emit_report(reports, args.format, args.out if args.out else sys.stdout, kind=kind)
    except CondSpecError as exc:
        print(f"condspec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except OSError as exc:
        print(f"condspec: cannot write report: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    line = json.dumps(dataclasses.asdict(manifest), sort_keys=True)
    if args.manifest:
        with open(args.manifest, "w", encoding="utf-8") as fh:
            fh.write(line + "\n")
    else:
        print(line, file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
