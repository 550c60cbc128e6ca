"""Kernel deviation quantiles against hidden width, as plot-ready CSV on stdout.

    python3 scripts/kernel_width_sweep.py --d 64 --channels 16 32 64 128 256 512 1024 --trials 100
"""
import argparse
import sys

from orbitadv.convnet import NetworkSpec
from orbitadv.harness.records import Table
from orbitadv.kernelcalc import kernel_deviation_experiment


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--depth", type=int, default=2, help="number of layers (>= 2)")
    ap.add_argument("--channels", type=int, nargs="+", default=[16, 32, 64, 128, 256, 512, 1024])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args(argv)

    hidden = [dict(width=2, stride=2, out_channels=8)]
    for _ in range(args.depth - 2):
        hidden.append(dict(width=1, stride=1, out_channels=8))
    arch = NetworkSpec.build(args.d, args.n, hidden + [dict(width=None, out_channels=1, activation="identity")])
    rows = kernel_deviation_experiment(arch, args.channels, args.trials, args.seed)
    table = Table(["channels", "trials", "mean", "p50", "p95", "max", "p95_times_sqrt_c"])
    for r in rows:
        table.add(r.channels, r.trials, r.mean, r.p50, r.p95, r.max, r.p95 * r.channels ** 0.5)
    sys.stdout.write(table.to_csv())
    return 0


if __name__ == "__main__":
    sys.exit(main())
