"""Command line entry point.

    orbitadv <kind> --config PATH [--seed N] [--out DIR] [--workers K]
    orbitadv validate --config PATH
    orbitadv report PATH [PATH ...] [--csv FILE]

Seed precedence: ``--seed`` over ``ORBITADV_SEED`` over the config file.
Exit status: 0 if every check passed, 1 if a check failed, 2 for a config
error, 3 for an I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import KINDS, ConfigError, ExperimentConfig, parse_config, serialize
from .records import Table, load_summary
from .run import TrialError, run, with_overrides
from .seeding import check_seed

SEED_ENV = "ORBITADV_SEED"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orbitadv", description="Orbit adversarial experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--workers", type=int)
    sp = sub.add_parser("validate", help="parse a config and print its canonical form")
    sp.add_argument("--config", required=True, type=Path)
    sp = sub.add_parser("report", help="tabulate estimates against bounds from JSON summaries")
    sp.add_argument("paths", nargs="+", type=Path, help="summary files or directories")
    sp.add_argument("--csv", type=Path, help="also write the table here")
    return p


def load_config(path: Path) -> ExperimentConfig:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def resolve_seed(cli_seed, cfg: ExperimentConfig, environ=os.environ) -> int:
    if cli_seed is not None:
        return check_seed(cli_seed)
    if environ.get(SEED_ENV):
        try:
            return check_seed(int(environ[SEED_ENV]))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}: {exc}") from None
    return cfg.seed


def report_table(paths) -> Table:
    files = []
    for p in paths:
        files.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    table = Table(["experiment", "seed", "quantity", "estimate", "bound", "check"])
    for f in files:
        doc = load_summary(f)
        keys = sorted(set(doc["estimates"]) | set(doc["bounds"]) | set(doc["checks"]))
        for k in keys:
            table.add(doc["experiment"], doc["seed"], k, doc["estimates"].get(k, ""),
                      doc["bounds"].get(k, ""), doc["checks"].get(k, ""))
    return table


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            sys.stdout.write(serialize(load_config(args.config)))
            return EXIT_OK
        if args.command == "report":
            table = report_table(args.paths)
            text = table.to_csv()
            sys.stdout.write(text)
            if args.csv:
                args.csv.write_text(text, encoding="utf-8")
            return EXIT_OK
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError(f"{args.config}: kind is {cfg.kind!r} but subcommand is {args.command!r}")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = with_overrides(cfg, seed=resolve_seed(args.seed, cfg),
                             out_dir=str(args.out) if args.out else None, workers=args.workers)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)  # fail before computing
        record = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrialError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except ValueError as exc:  # parameters the module rejected
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, ok in record.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.kind}:{name}")
    print(f"wrote {cfg.kind}.csv and {cfg.kind}.json to {cfg.out_dir}")
    return EXIT_OK if record.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
