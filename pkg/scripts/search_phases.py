"""Which search phase finds each flip, and how far inside the budget it lands.

    python3 scripts/search_phases.py --family relu --d 128 --taus 6 8 10 --networks 40

Prints per-tau success rates, the phase tally and quantiles of
distance / epsilon for successful networks.
"""
import argparse
import collections
import sys

import numpy as np

from orbitadv.advsearch import theorem_trial
from orbitadv.convnet import NetworkSpec
from orbitadv.harness.seeding import aux_stream
from orbitadv.rotgroup import sphere_cloud


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", choices=["odd", "relu"], default="odd")
    ap.add_argument("--d", type=int, default=100)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--channels", type=int, default=256)
    ap.add_argument("--taus", type=float, nargs="+", default=[4.0, 6.0, 8.0])
    ap.add_argument("--networks", type=int, default=40)
    ap.add_argument("--chain-steps", type=int, default=300)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args(argv)

    act = "tanh" if args.family == "odd" else "relu"
    arch = NetworkSpec.build(args.d, args.n, [
        dict(width=2, stride=2, out_channels=args.channels, activation=act),
        dict(width=None, out_channels=1, activation="identity"),
    ])
    x0 = sphere_cloud(args.d, args.n, aux_stream(args.seed, 0))
    rec = theorem_trial(args.family, arch, x0, args.taus, args.networks, args.seed,
                        chain_steps=args.chain_steps)
    for s in rec.summaries:
        rows = [r for r in rec.rows if r.tau == s.tau]
        phases = collections.Counter(r.phase or "none" for r in rows if not r.reused)
        ratios = np.array([r.achieved_distance / r.epsilon for r in rows if r.success and r.base_sign])
        q = np.quantile(ratios, [0.1, 0.5, 0.9]) if ratios.size else [float("nan")] * 3
        reused = sum(r.reused for r in rows)
        print(f"tau={s.tau:g} success={s.success_rate:.3f} floor={s.success_floor:.3f} "
              f"reused={reused} phases={dict(phases)} dist/eps q10/50/90={q[0]:.3f}/{q[1]:.3f}/{q[2]:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
