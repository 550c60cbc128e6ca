"""Run every config in a directory through the CLI and tabulate the results.

    python3 scripts/run_configs.py [--configs configs] [--out runs] [--workers K] [--only NAME ...]

Each config writes into ``<out>/<config stem>/``; the combined estimate/bound
table goes to ``<out>/report.csv``.
"""
import argparse
import sys
import time
from pathlib import Path

from orbitadv.harness import cli


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", type=Path, default=Path("configs"))
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", help="config stems to run (default: all)")
    args = ap.parse_args(argv)

    status = {}
    for path in sorted(args.configs.glob("*.cfg")):
        if args.only and path.stem not in args.only:
            continue
        kind = cli.load_config(path).kind
        start = time.perf_counter()
        code = cli.main([kind, "--config", str(path), "--out", str(args.out / path.stem),
                         "--workers", str(args.workers)])
        status[path.stem] = code
        print(f"[{path.stem}] exit {code} after {time.perf_counter() - start:.1f}s", flush=True)

    if status:
        cli.main(["report", *[str(args.out / s) for s in status], "--csv", str(args.out / "report.csv")])
    failed = [s for s, c in status.items() if c]
    print("all checks passed" if not failed else f"checks failed in: {', '.join(failed)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
