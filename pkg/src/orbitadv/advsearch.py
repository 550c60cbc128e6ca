"""Sign flips of random networks along the rotation orbit of an input.

The search never leaves the orbit ``{U x0 : U in SO(d)}``: every candidate is
a rotation of ``x0`` and every reported distance is the Euclidean distance
``|x - x0|`` measured directly. A network ``f`` is any callable mapping a batch
``(N, d, n)`` of clouds to ``N`` real values.

The search runs in three phases and stops as soon as a phase produces a flip
within budget:

1. random 2-planes (orthonormalised Gaussian pairs), each swept over a
   geometric ladder of angles whose distances cover ``(0, 2 eps]``;
2. full Haar rotations; when one flips the sign, its canonical plane angles
   are shrunk jointly towards the identity to locate the sign boundary;
3. a chained walk of small plane rotations anchored in the column span of
   the current point, greedily lowering ``sign(f(x0)) * f`` while staying
   inside the budget ball.

Each flip is refined by bisection on its one-parameter family. The search is
sound but incomplete: ``found=False`` is evidence, not a certificate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import schur

from . import stats
from .convnet import ODD_ACTIVATIONS, Network, NetworkSpec, feature_map, sample_network
from .harness.seeding import derive_stream
from .kernelcalc import iterate_dual
from .rotgroup import (
    angle_for_distance,
    as_cloud,
    haar_sample,
    orbit_samples,
    plane_reach,
    random_plane,
    rotate_in_plane,
    spectral_norm,
)

Evaluable = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AdversarialBudget:
    tau: float
    d: int
    spectral: float
    norm: float
    epsilon: float
    success_floor: float


def success_floor(tau: float) -> float:
    """1 - 2 exp(-tau^2 / 32); negative values mean the guarantee is vacuous."""
    return 1.0 - 2.0 * math.exp(-tau * tau / 32.0)


def budget(tau: float, x0) -> AdversarialBudget:
    X = as_cloud(x0)
    d = X.shape[0]
    if tau <= 0:
        raise ValueError("tau must be positive")
    if d < 3:
        raise ValueError(f"budget needs d >= 3 (sqrt(d - 2) > 0), got d={d}")
    norm = float(np.linalg.norm(X))
    if norm == 0.0:
        raise ValueError("x0 must be nonzero")
    sp = spectral_norm(X)
    return AdversarialBudget(tau, d, sp, norm, tau * sp / math.sqrt(d - 2), success_floor(tau))


@dataclass
class AdversarialResult:
    base_sign: int
    found: bool
    flip_point: np.ndarray | None
    achieved_distance: float
    budget: AdversarialBudget
    evaluations: int
    trace: list[tuple[float, int]] = field(default_factory=list)
    phase: str = ""


@dataclass(frozen=True)
class BalanceReport:
    p_plus: float
    p_minus: float
    samples: int
    confidence_halfwidth: float

    @property
    def p_min(self) -> float:
        return min(self.p_plus, self.p_minus)


class _Counted:
    def __init__(self, f: Evaluable):
        self.f = f
        self.calls = 0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        self.calls += X.shape[0]
        return np.asarray(self.f(X), dtype=float).reshape(X.shape[0])


def _sign(v) -> int:
    return int(np.sign(v))


def estimate_balance(f: Evaluable, x0, samples: int, rng: np.random.Generator,
                     batch: int = 2000) -> BalanceReport:
    """Monte Carlo estimates of the orbit measure of {f >= 0} and {f <= 0}."""
    if samples < 100:
        raise ValueError("balance estimation needs at least 100 samples")
    X = as_cloud(x0)
    plus = minus = 0
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        vals = np.asarray(f(orbit_samples(X, k, rng)), dtype=float)
        plus += int(np.count_nonzero(vals >= 0))
        minus += int(np.count_nonzero(vals <= 0))
        done += k
    p_plus, p_minus = plus / samples, minus / samples
    hw = max(stats.wald_halfwidth(p_plus, samples), stats.wald_halfwidth(p_minus, samples))
    return BalanceReport(p_plus, p_minus, samples, hw)


def _bisect(is_flip: Callable[[float], bool], lo: float, hi: float, rel_tol: float) -> float:
    """Shrink [lo, hi] around the sign boundary; ``hi`` always flips."""
    while hi - lo > rel_tol * abs(hi):
        mid = 0.5 * (lo + hi)
        if is_flip(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _plane_decomposition(U: np.ndarray):
    """Write a rotation as commuting plane rotations: U = Z B(angles) Z^T.

    Returns ``(Z, planes, angles)`` where ``planes`` lists index pairs in the
    Schur basis. Isolated -1 eigenvalues are paired into angle-pi planes.
    """
    T, Z = schur(U, output="real")
    d = U.shape[0]
    planes, angles, negs = [], [], []
    i = 0
    while i < d:
        if i + 1 < d and abs(T[i + 1, i]) > 1e-12:
            planes.append((i, i + 1))
            angles.append(math.atan2(T[i + 1, i], T[i, i]))
            i += 2
        else:
            if T[i, i] < 0:
                negs.append(i)
            i += 1
    for a, b in zip(negs[::2], negs[1::2]):
        planes.append((a, b))
        angles.append(math.pi)
    return Z, planes, np.array(angles)


def _partial_rotation(Z, planes, angles, t: float) -> np.ndarray:
    d = Z.shape[0]
    B = np.eye(d)
    for (a, b), th in zip(planes, angles):
        c, s = math.cos(t * th), math.sin(t * th)
        B[a, a] = B[b, b] = c
        B[b, a] = s
        B[a, b] = -s
    return Z @ B @ Z.T


class _Search:
    def __init__(self, f, X0, bud, rng, rel_tol):
        self.f = _Counted(f)
        self.X0 = X0
        self.eps = bud.epsilon
        self.rng = rng
        self.rel_tol = rel_tol
        self.best: tuple[float, np.ndarray, str] | None = None
        self.trace: list[tuple[float, int]] = []

    def dist(self, P):
        return float(np.linalg.norm(P - self.X0))

    def record(self, P, phase):
        dist = self.dist(P)
        self.trace.append((dist, _sign(self.f(P)[0])))
        if self.best is None or dist < self.best[0]:
            self.best = (dist, P, phase)

    def within_budget(self):
        return self.best is not None and self.best[0] <= self.eps

    def planes(self, base, count, n_angles):
        d = self.X0.shape[0]
        ladder = 2.0 * self.eps * np.geomspace(1e-3, 1.0, n_angles)
        for _ in range(count):
            u, v = random_plane(d, self.rng)
            reach = plane_reach(u, v, self.X0)
            if reach == 0.0:
                continue
            thetas = np.unique(angle_for_distance(ladder, reach))
            vals = self.f(rotate_in_plane(u, v, thetas, self.X0))
            hits = np.nonzero(np.sign(vals) == -base)[0]
            if hits.size == 0:
                continue
            j = hits[0]
            lo = thetas[j - 1] if j > 0 else 0.0

            def flips(th, u=u, v=v):
                return _sign(self.f(rotate_in_plane(u, v, [th], self.X0))[0]) == -base

            th = _bisect(flips, lo, thetas[j], self.rel_tol)
            self.record(rotate_in_plane(u, v, [th], self.X0)[0], "plane")

    def haar(self, base, count, n_angles):
        d = self.X0.shape[0]
        ts = np.geomspace(1e-3, 1.0, n_angles)
        for _ in range(count):
            U = haar_sample(d, self.rng)
            if _sign(self.f(U @ self.X0)[0]) != -base:
                continue
            Z, planes, angles = _plane_decomposition(U)
            if np.linalg.norm(_partial_rotation(Z, planes, angles, 1.0) - U) > 1e-8:
                continue
            pts = np.stack([_partial_rotation(Z, planes, angles, t) @ self.X0 for t in ts])
            hits = np.nonzero(np.sign(self.f(pts)) == -base)[0]
            if hits.size == 0:
                continue
            j = hits[0]
            lo = ts[j - 1] if j > 0 else 0.0

            def flips(t):
                P = _partial_rotation(Z, planes, angles, t) @ self.X0
                return _sign(self.f(P)[0]) == -base

            t = _bisect(flips, lo, ts[j], self.rel_tol)
            self.record(_partial_rotation(Z, planes, angles, t) @ self.X0, "haar")

    def chain(self, base, f0, steps, n_angles):
        d, n = self.X0.shape
        X = self.X0.copy()
        cur = base * f0
        step = self.eps * np.geomspace(1e-2, 0.5, max(n_angles // 4, 2))
        for _ in range(steps):
            u = X @ self.rng.standard_normal(n)
            if not np.any(u):
                u = self.rng.standard_normal(d)
            u /= np.linalg.norm(u)
            v = self.rng.standard_normal(d)
            v -= (v @ u) * u
            v /= np.linalg.norm(v)
            reach = plane_reach(u, v, X)
            if reach == 0.0:
                continue
            th = angle_for_distance(step, reach)
            thetas = np.concatenate([th, -th])
            pts = rotate_in_plane(u, v, thetas, X)
            dists = np.linalg.norm((pts - self.X0).reshape(len(thetas), -1), axis=1)
            vals = base * self.f(pts)
            inside = dists <= self.eps
            flip = inside & (vals < 0)
            if np.any(flip):
                j = int(np.argmin(np.where(flip, dists, np.inf)))

                def flips(t, u=u, v=v, X=X):
                    return _sign(self.f(rotate_in_plane(u, v, [t], X))[0]) == -base

                sgn = 1.0 if thetas[j] > 0 else -1.0
                t = _bisect(lambda a: flips(sgn * a), 0.0, abs(thetas[j]), self.rel_tol)
                self.record(rotate_in_plane(u, v, [sgn * t], X)[0], "chain")
                return
            vals = np.where(inside, vals, np.inf)
            j = int(np.argmin(vals))
            if vals[j] < cur:
                cur = vals[j]
                X = pts[j]


def find_adversarial(f: Evaluable, x0, bud: AdversarialBudget, max_candidates: int = 64,
                     rng: np.random.Generator | None = None, n_angles: int = 32,
                     chain_steps: int = 300, rel_tol: float = 1e-6) -> AdversarialResult:
    """Search the orbit of ``x0`` for a point where ``f`` has the opposite sign.

    ``found`` is true iff the closest flip found lies within ``bud.epsilon``;
    ``achieved_distance`` is the closest flip distance (``inf`` if none).
    A zero at ``x0`` counts as a vacuous success at distance 0.
    """
    X0 = as_cloud(x0)
    if not np.any(X0):
        raise ValueError("x0 must be nonzero")
    rng = np.random.default_rng() if rng is None else rng
    s = _Search(f, X0, bud, rng, rel_tol)
    f0 = float(s.f(X0)[0])
    base = _sign(f0)
    if base == 0:
        return AdversarialResult(0, True, X0.copy(), 0.0, bud, s.f.calls, [(0.0, 0)], "degenerate")

    s.planes(base, max_candidates, n_angles)
    if s.best is None:
        s.haar(base, max_candidates, n_angles)
    if not s.within_budget() and chain_steps > 0:
        s.chain(base, f0, chain_steps, n_angles)

    if s.best is None:
        return AdversarialResult(base, False, None, math.inf, bud, s.f.calls, s.trace, "")
    dist, P, phase = s.best
    return AdversarialResult(base, dist <= bud.epsilon, P, dist, bud, s.f.calls, s.trace, phase)


# --- experiments ---------------------------------------------------------------------------


def check_kind(kind: str, arch: NetworkSpec):
    """Validate that the architecture satisfies the hypotheses for ``kind``."""
    if not arch.scalar_output:
        raise ValueError("theorem trials need a scalar-output network")
    d = arch.in_shape[0]
    if kind == "odd":
        if d % 2:
            raise ValueError(f"odd-activation trials need even d (-I must lie in SO(d)), got d={d}")
        bad = [l.activation for l in arch.layers if l.activation not in ODD_ACTIVATIONS]
        if bad:
            raise ValueError(f"odd-activation trials need odd activations, got {bad}")
    elif kind == "relu":
        hidden = arch.layers[:-1]
        if any(l.activation != "relu" for l in hidden) or arch.layers[-1].activation != "identity":
            raise ValueError("relu trials need ReLU hidden layers and an identity last layer")
        if any(l.init != "xavier" for l in arch.layers):
            raise ValueError("relu trials need Xavier layers")
    else:
        raise ValueError(f"unknown kind {kind!r}; expected 'odd' or 'relu'")


@dataclass(frozen=True)
class TrialRow:
    network: int
    tau: float
    base_sign: int
    found: bool
    achieved_distance: float
    epsilon: float
    success: bool
    reused: bool
    evaluations: int
    phase: str


@dataclass(frozen=True)
class TauSummary:
    tau: float
    networks: int
    success_rate: float
    degenerate_rate: float
    mean_distance_ratio: float
    success_floor: float
    halfwidth: float


@dataclass
class TheoremTrialRecord:
    kind: str
    rows: list[TrialRow]
    summaries: list[TauSummary]


def _tau_key(tau: float) -> int:
    return int(round(tau * 1_000_000))


def _network_trial(args) -> list[TrialRow]:
    kind, arch, X0, taus, seed, i, search_kw = args
    net = Network.sample(arch, derive_stream(seed, i))
    rows = []
    best = math.inf
    for tau in taus:
        bud = budget(tau, X0)
        res = find_adversarial(net, X0, bud, rng=derive_stream(seed, i, _tau_key(tau)), **search_kw)
        prev, best = best, min(best, res.achieved_distance)
        success = res.base_sign == 0 or best <= bud.epsilon
        reused = success and not res.found and prev <= bud.epsilon
        rows.append(TrialRow(i, tau, res.base_sign, res.found, best, bud.epsilon,
                             success, reused, res.evaluations, res.phase))
    return rows


def theorem_trial(kind: str, arch: NetworkSpec, x0, taus: Sequence[float], networks: int,
                  seed: int, mapper=map, **search_kw) -> TheoremTrialRecord:
    """Empirical success rate of the orbit search over independent networks.

    Taus are processed in increasing order for each network; a flip found at
    a smaller tau counts at every larger tau, so success is monotone in tau.
    """
    check_kind(kind, arch)
    X0 = as_cloud(x0)
    if X0.shape != arch.in_shape:
        raise ValueError(f"x0 has shape {X0.shape}, architecture expects {arch.in_shape}")
    if networks < 1:
        raise ValueError("networks must be >= 1")
    taus = sorted(float(t) for t in taus)
    jobs = [(kind, arch, X0, taus, seed, i, search_kw) for i in range(networks)]
    rows = [r for chunk in mapper(_network_trial, jobs) for r in chunk]
    summaries = []
    for tau in taus:
        rs = [r for r in rows if r.tau == tau]
        ok = [r for r in rs if r.success]
        ratios = [r.achieved_distance / r.epsilon for r in ok if r.base_sign != 0]
        floor = success_floor(tau)
        summaries.append(TauSummary(
            tau, len(rs), len(ok) / len(rs),
            sum(r.base_sign == 0 for r in rs) / len(rs),
            stats.mean(ratios) if ratios else math.nan,
            floor, stats.binomial_sigma(floor, len(rs)),
        ))
    return TheoremTrialRecord(kind, rows, summaries)


def _balance_job(args) -> BalanceReport:
    arch, X0, samples, seed, i = args
    rng = derive_stream(seed, i)
    net = Network.sample(arch, rng)
    return estimate_balance(net, X0, samples, rng)


def balance_experiment(arch: NetworkSpec, x0, networks: int, samples: int, seed: int,
                       mapper=map) -> list[BalanceReport]:
    """One :class:`BalanceReport` per independently sampled network."""
    X0 = as_cloud(x0)
    return list(mapper(_balance_job, [(arch, X0, samples, seed, i) for i in range(networks)]))


@dataclass(frozen=True)
class SeparationRow:
    trial: int
    separated: bool
    core1: bool
    min_feature_gap: float
    max_feature_norm: float


@dataclass
class SeparationRecord:
    m: int
    rows: list[SeparationRow]
    separation_rate: float
    core1_rate: float
    core1_floor: float
    feature_gap_floor: float


def separation_points(d: int) -> int:
    """floor(sqrt(ln d)) orbit points per trial."""
    return int(math.floor(math.sqrt(math.log(d))))


def _separation_job(args) -> SeparationRow:
    arch, X0, m, seed, i = args
    d = X0.shape[0]
    rng = derive_stream(seed, i)
    weights = sample_network(arch, rng)
    pts = orbit_samples(X0, m, rng)
    net = Network(arch, weights)
    vals = net(pts)
    separated = bool(np.any(vals < 0) and np.any(vals > 0))
    core1 = True
    for a in range(m):
        for b in range(a + 1, m):
            if np.any(np.einsum("dt,dt->t", pts[a], pts[b]) > d / 2):
                core1 = False
    feats = feature_map(arch, weights, pts).reshape(m, -1)
    norms = np.linalg.norm(feats, axis=1)
    gaps = [np.linalg.norm(feats[a] - feats[b]) for a in range(m) for b in range(a + 1, m)]
    return SeparationRow(i, separated, core1, float(min(gaps)) if gaps else math.inf, float(norms.max()))


def separation_experiment(arch: NetworkSpec, x0, trials: int, seed: int,
                          mapper=map) -> SeparationRecord:
    """Frequency with which a fresh network separates floor(sqrt(ln d)) orbit points.

    Columns of ``x0`` must share one norm R; by positive homogeneity of ReLU
    networks the cloud is rescaled to R = sqrt(d) before sampling.
    """
    check_kind("relu", arch)
    X0 = as_cloud(x0)
    d, n = X0.shape
    norms = np.linalg.norm(X0, axis=0)
    if np.ptp(norms) > 1e-9 * norms.max() or norms.max() == 0:
        raise ValueError("columns of x0 must share one positive norm")
    X0 = X0 * (math.sqrt(d) / norms[0])
    m = separation_points(d)
    rows = list(mapper(_separation_job, [(arch, X0, m, seed, i) for i in range(trials)]))
    pairs = m * (m - 1) // 2
    core1_floor = 1.0 - 2.0 * pairs * n * math.exp(-d / 8.0)
    gap_floor = math.sqrt(2.0 * (1.0 - iterate_dual(0.5, arch.depth - 1)))
    return SeparationRecord(
        m, rows,
        sum(r.separated for r in rows) / trials,
        sum(r.core1 for r in rows) / trials,
        core1_floor, gap_floor,
    )
