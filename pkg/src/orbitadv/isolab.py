"""Monte Carlo checks of concentration, isoperimetry and Gaussian tail tools.

Every experiment returns plain records pairing an empirical frequency (or
moment) with the theoretical bound it should respect, plus the Monte Carlo
standard deviation used to judge "within noise".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import stats
from .convnet import NetworkSpec, _run_layers, feature_scale, sample_network
from .rotgroup import (
    angle_for_distance,
    as_cloud,
    haar_samples,
    orbit_samples,
    plane_reach,
    random_plane,
    rotate_in_plane,
    spectral_norm,
    top_singular_pair,
)


# --- concentration on SO(d) ---------------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationRecord:
    d: int
    epsilon: float
    lipschitz: float
    empirical_tail: float
    theoretical_bound: float
    samples: int
    halfwidth: float  # binomial sigma at the bound

    @property
    def within_noise(self) -> bool:
        return self.empirical_tail <= self.theoretical_bound + 3.0 * self.halfwidth


def concentration_bound(d: int, eps: float, lipschitz: float) -> float:
    return math.exp(-(d - 2) * eps * eps / (8.0 * lipschitz * lipschitz))


def check_lipschitz(g, lipschitz: float, d: int, rng, pairs: int = 200) -> float:
    """Largest observed |g(U) - g(V)| / |U - V|_F; raises if it exceeds ``lipschitz``.

    Half of the pairs are far apart (independent Haar), half are close
    (small plane rotations of one Haar element).
    """
    U = haar_samples(d, pairs, rng)
    V = haar_samples(d, pairs, rng)
    for k in range(pairs // 2, pairs):
        u, v = random_plane(d, rng)
        V[k] = rotate_in_plane(u, v, [1e-3], U[k])[0]
    num = np.abs(np.asarray(g(U), dtype=float) - np.asarray(g(V), dtype=float))
    den = np.linalg.norm((U - V).reshape(pairs, -1), axis=1)
    worst = float(np.max(num / den))
    if worst > lipschitz * (1 + 1e-9):
        raise ValueError(f"test function is not {lipschitz}-Lipschitz (observed ratio {worst:.4g})")
    return worst


def concentration_experiment(g: Callable[[np.ndarray], np.ndarray], lipschitz: float, d: int,
                             epsilons: Sequence[float], samples: int, rng: np.random.Generator,
                             batch: int = 1000) -> list[ConcentrationRecord]:
    """Empirical upper tails of ``g`` under Haar measure on SO(d).

    ``g`` maps a batch ``(N, d, d)`` of rotations to ``N`` reals.
    """
    if samples < 1000:
        raise ValueError("concentration experiment needs at least 1000 samples")
    check_lipschitz(g, lipschitz, d, rng)
    vals = np.empty(samples)
    for start in range(0, samples, batch):
        k = min(batch, samples - start)
        vals[start:start + k] = np.asarray(g(haar_samples(d, k, rng)), dtype=float)
    m = stats.mean(vals)
    out = []
    for eps in epsilons:
        tail = int(np.count_nonzero(vals >= m + eps)) / samples
        bound = concentration_bound(d, eps, lipschitz)
        out.append(ConcentrationRecord(d, float(eps), lipschitz, tail, bound, samples,
                                       stats.binomial_sigma(bound, samples)))
    return out


def top_left_entry(U: np.ndarray) -> np.ndarray:
    """U -> U_11, 1-Lipschitz in the Frobenius metric."""
    return U[..., 0, 0]


# --- isoperimetry on an orbit --------------------------------------------------------------


@dataclass(frozen=True)
class IndicatorSet:
    """Membership predicate on orbit points, vectorised over ``(N, d, n)``.

    ``distance`` optionally gives the exact distance to the set; it is used
    only to cross-check probe certification, never to certify.
    """

    contains: Callable[[np.ndarray], np.ndarray]
    label: str = ""
    distance: Callable[[np.ndarray], np.ndarray] | None = None


def hemisphere(d: int, radius: float) -> IndicatorSet:
    """{z : z_1 >= 0} on the sphere of ``radius`` (single-column clouds)."""

    def contains(Z):
        return np.asarray(Z)[:, 0, 0] >= 0

    def distance(Z):
        z1 = np.asarray(Z)[:, 0, 0]
        perp = np.sqrt(np.maximum(radius * radius - z1 * z1, 0.0))
        far = np.sqrt(np.maximum(2.0 * radius * (radius - perp), 0.0))
        return np.where(z1 >= 0, 0.0, far)

    return IndicatorSet(contains, f"hemisphere z1>=0 (d={d})", distance)


def whole_orbit() -> IndicatorSet:
    return IndicatorSet(lambda Z: np.ones(len(Z), dtype=bool), "whole orbit")


@dataclass(frozen=True)
class Certificate:
    """Point ``z`` lies within ``distance`` of ``witness``, a member of the set."""

    point: np.ndarray
    witness: np.ndarray
    distance: float


@dataclass(frozen=True)
class BlowupRecord:
    epsilon: float
    measure: float  # estimated mu_X(A)
    blowup_lower: float  # certified lower estimate of mu_X(A_eps)
    bound: float  # 1 - exp(-(d-2) eps^2 mu^2 / (8 L^2)) with the estimated mu
    samples: int
    sigma: float  # binomial sigma of the blow-up estimate
    agreement: float | None  # fraction agreeing with the exact distance, if available


@dataclass
class BlowupResult:
    lipschitz: float
    d: int
    records: list[BlowupRecord]
    certificates: list[Certificate] = field(repr=False, default_factory=list)


def isoperimetric_bound(d: int, eps: float, measure: float, lipschitz: float) -> float:
    return 1.0 - math.exp(-(d - 2) * eps * eps * measure * measure / (8.0 * lipschitz * lipschitz))


class _Prober:
    """Certify z in A_eps by finding members of A near z along plane rotations."""

    def __init__(self, A: IndicatorSet, members: np.ndarray, k_probe: int, ladder: int,
                 aimed: int, rng: np.random.Generator):
        self.A = A
        self.members = members
        self.centroid = members.mean(axis=0) if len(members) else None
        self.k_probe = k_probe
        self.ladder = ladder
        self.aimed = aimed
        self.rng = rng

    def _aimed_plane(self, Z, target):
        # rotate the dominant direction a of Z towards where target sends it
        _, a = top_singular_pair(Z)
        b = target @ (Z.T @ a)
        b = b - (b @ a) * a
        nb = np.linalg.norm(b)
        if nb < 1e-12:
            return None
        return a, b / nb

    def planes(self, Z, max_dist):
        d = Z.shape[0]
        out = []
        if self.centroid is not None:
            targets = [self.centroid]
            if len(self.members):
                dists = np.linalg.norm((self.members - Z).reshape(len(self.members), -1), axis=1)
                near = np.argsort(dists)[: max(self.aimed - 1, 0)]
                targets += [self.members[j] for j in near]
            for t in targets:
                pl = self._aimed_plane(Z, t)
                if pl is not None:
                    out.append(pl)
        while len(out) < self.k_probe:
            out.append(random_plane(d, self.rng))
        return out[: self.k_probe]

    def certify(self, Z, max_dist) -> tuple[float, np.ndarray | None]:
        """Smallest witness distance found (``inf`` if none) and the witness."""
        best, witness = math.inf, None
        if len(self.members):
            dists = np.linalg.norm((self.members - Z).reshape(len(self.members), -1), axis=1)
            j = int(np.argmin(dists))
            if dists[j] <= max_dist:
                best, witness = float(dists[j]), self.members[j]
        fracs = np.arange(1, self.ladder + 1) / self.ladder
        for u, v in self.planes(Z, max_dist):
            reach = plane_reach(u, v, Z)
            if reach == 0.0:
                continue
            limit = min(max_dist, best)
            thetas = angle_for_distance(limit * fracs, reach)
            for sgn in (1.0, -1.0):
                pts = rotate_in_plane(u, v, sgn * thetas, Z)
                hit = np.nonzero(self.A.contains(pts))[0]
                if hit.size == 0:
                    continue
                j = int(hit[0])
                lo, hi = (thetas[j - 1] if j else 0.0), thetas[j]
                for _ in range(30):
                    mid = 0.5 * (lo + hi)
                    if self.A.contains(rotate_in_plane(u, v, [sgn * mid], Z))[0]:
                        hi = mid
                    else:
                        lo = mid
                P = rotate_in_plane(u, v, [sgn * hi], Z)[0]
                dist = float(np.linalg.norm(P - Z))
                if dist < best and self.A.contains(P[None])[0]:
                    best, witness = dist, P
        return best, witness


def blowup_experiment(A: IndicatorSet, x0, epsilons: Sequence[float], samples_measure: int,
                      samples_blowup: int, rng: np.random.Generator, k_probe: int = 128,
                      ladder: int = 16, aimed: int = 8, max_members: int = 4000) -> BlowupResult:
    """Estimate mu_X(A) and certified lower estimates of mu_X(A_eps).

    Phase 1 samples the orbit to estimate mu_X(A) and keeps the members found.
    Phase 2 samples fresh orbit points; a point counts as inside A_eps only if
    a member of A within eps is exhibited: a stored member, or a point reached
    by a plane rotation (``k_probe`` planes per point, aimed at the member
    centroid and nearest members first, then random). The same phase-2 points
    serve every eps, so the estimates are monotone in eps.
    """
    X0 = as_cloud(x0)
    d = X0.shape[0]
    L = spectral_norm(X0)
    if L == 0.0:
        raise ValueError("orbit of the zero cloud is degenerate")
    pts = orbit_samples(X0, samples_measure, rng)
    inside = np.asarray(A.contains(pts), dtype=bool)
    mu = float(inside.mean())
    members = pts[inside][:max_members]
    prober = _Prober(A, members, k_probe, ladder, aimed, rng)

    Z = orbit_samples(X0, samples_blowup, rng)
    inA = np.asarray(A.contains(Z), dtype=bool)
    eps_max = float(max(epsilons))
    cert_dist = np.where(inA, 0.0, np.inf)
    certs: list[Certificate] = []
    for k in np.nonzero(~inA)[0]:
        dist, w = prober.certify(Z[k], eps_max)
        if w is not None:
            cert_dist[k] = dist
            certs.append(Certificate(Z[k], w, dist))
    exact = A.distance(Z) if A.distance is not None else None

    records = []
    for eps in epsilons:
        certified = cert_dist <= eps
        est = float(certified.mean())
        agreement = None
        if exact is not None:
            agreement = float(np.mean(certified == (exact <= eps)))
        records.append(BlowupRecord(float(eps), mu, est, isoperimetric_bound(d, eps, mu, L),
                                    samples_blowup, stats.binomial_sigma(est, samples_blowup),
                                    agreement))
    return BlowupResult(L, d, records, certs)


# --- Gaussian tools --------------------------------------------------------------------------


@dataclass(frozen=True)
class SudakovRecord:
    m: int
    separation: float
    estimate: float
    stderr: float
    ratio: float  # estimate / (separation * sqrt(ln m)); nan for m = 1


def sudakov_check(points, separation: float, samples: int, rng: np.random.Generator,
                  batch: int = 20000) -> SudakovRecord:
    """E max_i <w, x_i> for standard Gaussian w, for alpha-separated points."""
    P = np.asarray(points, dtype=float).reshape(len(points), -1)
    m = P.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            gap = np.linalg.norm(P[i] - P[j])
            if gap < separation * (1 - 1e-12):
                raise ValueError(f"points {i} and {j} are {gap:.4g} apart, less than {separation}")
    maxima = np.empty(samples)
    for start in range(0, samples, batch):
        k = min(batch, samples - start)
        maxima[start:start + k] = (rng.standard_normal((k, P.shape[1])) @ P.T).max(axis=1)
    est = stats.mean(maxima)
    se = math.sqrt(stats.variance(maxima) / samples)
    ratio = est / (separation * math.sqrt(math.log(m))) if m > 1 else math.nan
    return SudakovRecord(m, separation, est, se, ratio)


@dataclass(frozen=True)
class TailRecord:
    d: int
    t: float
    empirical_tail: float
    bound: float
    samples: int
    sigma: float  # binomial sigma at the bound

    @property
    def within_noise(self) -> bool:
        return self.empirical_tail <= self.bound + 3.0 * self.sigma


def sphere_tail_check(d: int, t_values: Sequence[float], samples: int,
                      rng: np.random.Generator, batch: int = 20000) -> list[TailRecord]:
    """Tails of <x, y> for independent uniform x, y on the sphere of radius sqrt(d)."""
    ips = np.empty(samples)
    r = math.sqrt(d)
    for start in range(0, samples, batch):
        k = min(batch, samples - start)
        x = rng.standard_normal((k, d))
        y = rng.standard_normal((k, d))
        x *= r / np.linalg.norm(x, axis=1, keepdims=True)
        y *= r / np.linalg.norm(y, axis=1, keepdims=True)
        ips[start:start + k] = np.einsum("kd,kd->k", x, y)
    out = []
    for t in t_values:
        tail = int(np.count_nonzero(ips >= t)) / samples
        bound = math.exp(-t * t / (2.0 * d))
        out.append(TailRecord(d, float(t), tail, bound, samples, stats.binomial_sigma(bound, samples)))
    return out


@dataclass(frozen=True)
class VarianceRecord:
    points: int
    max_feature_norm: float
    variance: float
    stderr: float
    bound: float = 4.0

    @property
    def within_noise(self) -> bool:
        return self.variance <= self.bound + 3.0 * self.stderr


def last_layer_variance(features, trials: int, rng: np.random.Generator) -> VarianceRecord:
    """Var of Z = max_i <W, sqrt(D) psi_i> over Gaussian W with variance 1/D entries.

    ``features`` is ``(m, ...)``, one feature map per point, D its flat size.
    """
    F = np.asarray(features, dtype=float)
    m = F.shape[0]
    F = F.reshape(m, -1)
    D = F.shape[1]
    # <W, sqrt(D) psi> with W ~ N(0, I/D) equals <g, psi> with g standard
    Zs = (rng.standard_normal((trials, D)) @ F.T).max(axis=1)
    norms = np.linalg.norm(F, axis=1)
    return VarianceRecord(m, float(norms.max()), stats.variance(Zs), stats.variance_stderr(Zs))


def variance_check_last_layer(arch: NetworkSpec, points, trials: int, rng: np.random.Generator,
                              weights=None) -> VarianceRecord:
    """Fix all layers but the last, then resample the last one ``trials`` times.

    The maximum runs over ``max_i <W_l, sqrt(n d) Psi(x^i)>``, a positive
    multiple of ``max_i f(x^i)``. Points must have feature norm at most 2.
    """
    if weights is None:
        weights = sample_network(arch, rng)
    X = np.asarray(points, dtype=float)
    if X.ndim == 2:
        X = X[None]
    feats = feature_scale(arch) * _run_layers(arch.layers[:-1], weights[:-1], X)
    norms = np.linalg.norm(feats.reshape(len(X), -1), axis=1)
    if np.any(norms > 2.0 + 1e-12):
        raise ValueError(f"feature norms must be <= 2, got max {norms.max():.4g}")
    return last_layer_variance(feats, trials, rng)
