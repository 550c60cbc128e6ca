"""Distribution of min(p+, p-) for ReLU networks and what a 90% requirement needs.

    python3 scripts/relu_balance_analysis.py --networks 200 --samples 10000

For a two-layer ReLU network f = <W2, relu(W1 x)>, the output on the orbit is
a Gaussian process whose mean component (shared by all orbit points) carries
roughly 1/pi of the variance. When that component is large relative to the
fluctuating part, one sign dominates the orbit and min(p+, p-) is small. This
script reports the empirical fraction of networks above 1/ln d, with and
without the 3-halfwidth slack, at several Monte Carlo sample sizes, and the
fraction predicted by a Gaussian model of the orbit average.
"""
import argparse
import math
import sys

import numpy as np
from scipy import stats as sps

from orbitadv.advsearch import balance_experiment
from orbitadv.convnet import NetworkSpec
from orbitadv.harness.seeding import aux_stream
from orbitadv.rotgroup import sphere_cloud


def gaussian_prediction(target: float, mean_share: float) -> float:
    """P(min(p+, p-) >= target) when f = m + g with m ~ N(0, s) and g ~ N(0, 1 - s) per point.

    p+ = Phi(m / sqrt(1 - s)), so min(p+, p-) >= target iff |m| <= sqrt(1 - s) * z,
    z = Phi^{-1}(1 - target).
    """
    z = sps.norm.ppf(1 - target)
    lim = math.sqrt(1 - mean_share) * z / math.sqrt(mean_share)
    return 2 * sps.norm.cdf(lim) - 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=128)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--channels", type=int, default=256)
    ap.add_argument("--networks", type=int, default=200)
    ap.add_argument("--samples", type=int, nargs="+", default=[1000, 2000, 10000])
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args(argv)

    arch = NetworkSpec.build(args.d, args.n, [dict(width=2, stride=2, out_channels=args.channels),
                                              dict(width=None, out_channels=1, activation="identity")])
    x0 = sphere_cloud(args.d, args.n, aux_stream(args.seed, 0))
    target = 1 / math.log(args.d)
    print(f"target 1/ln d = {target:.4f}; Gaussian-model prediction "
          f"(mean share 1/pi) = {gaussian_prediction(target, 1 / math.pi):.3f}")
    for N in args.samples:
        reps = balance_experiment(arch, x0, args.networks, N, args.seed)
        pmin = np.array([r.p_min for r in reps])
        hw = np.array([r.confidence_halfwidth for r in reps])
        print(f"samples={N:>6}: strict {np.mean(pmin >= target):.3f}, "
              f"with 3-halfwidth slack {np.mean(pmin >= target - 3 * hw):.3f}, "
              f"median p_min {np.median(pmin):.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
