"""Primitives for the rotation group SO(d) acting on point clouds.

A point cloud is a ``(d, n)`` array whose columns are the n vectors
``x_1, ..., x_n`` in R^d; a batch of clouds is a ``(N, d, n)`` array. A
rotation acts on a cloud by rotating every column simultaneously, which is
plain matrix multiplication ``U @ X``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-10
DET_TOL = 1e-8


class DimensionError(ValueError):
    pass


def check_rotation(U) -> np.ndarray:
    """Return ``U`` as an array after checking that it lies in SO(d)."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] != U.shape[1] or U.shape[0] == 0:
        raise DimensionError(f"rotation must be a nonempty square matrix, got {U.shape}")
    resid = np.linalg.norm(U.T @ U - np.eye(U.shape[0]))
    if resid > ORTHO_TOL:
        raise ValueError(f"matrix is not orthogonal: |U^T U - I|_F = {resid:.3e}")
    det = np.linalg.det(U)
    if abs(det - 1.0) > DET_TOL:
        raise ValueError(f"determinant {det:.6f} != 1")
    return U


def as_cloud(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionError(f"point cloud must be (d, n), got shape {x.shape}")
    return x


def haar_samples(d: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` independent Haar rotations, shape ``(size, d, d)``.

    Gaussian matrix -> QR -> multiply the columns of Q by sign(diag R), which
    makes Q Haar on O(d); then negate the last column wherever det = -1.
    """
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    G = rng.standard_normal((size, d, d))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.einsum("kii->ki", R))
    signs[signs == 0] = 1.0
    Q = Q * signs[:, None, :]
    neg = np.linalg.det(Q) < 0
    Q[neg, :, -1] *= -1.0
    return Q


def haar_sample(d: int, rng: np.random.Generator) -> np.ndarray:
    """One Haar-distributed element of SO(d)."""
    return haar_samples(d, 1, rng)[0]


def frobenius_distance(U, V) -> float:
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape != V.shape:
        raise DimensionError(f"shape mismatch {U.shape} vs {V.shape}")
    return float(np.linalg.norm(U - V))


def act(U, x) -> np.ndarray:
    """Rotate every column of the cloud: ``(U x_1, ..., U x_n)``."""
    U = np.asarray(U, dtype=float)
    x = as_cloud(x)
    if U.shape[-1] != x.shape[0]:
        raise DimensionError(f"rotation of size {U.shape[-1]} cannot act on R^{x.shape[0]}")
    return U @ x


def _top_eigpair(G: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray]:
    # deterministic start: the Gram column of largest norm, plus a small
    # all-ones component so we are never orthogonal to the top eigenvector
    k = int(np.argmax(np.linalg.norm(G, axis=0)))
    v = G[:, k] + 1e-3 * np.linalg.norm(G[:, k]) / np.sqrt(len(G))
    v = v / np.linalg.norm(v)
    lam = float(v @ G @ v)
    for _ in range(max_iter):
        y = G @ v
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, v
        v = y / ny
        new = float(v @ G @ v)
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return max(lam, 0.0), v


def top_singular_pair(x, tol: float = 1e-12, max_iter: int = 10_000) -> tuple[float, np.ndarray]:
    """Largest singular value and its left singular vector (unit, in R^d).

    Power iteration on the smaller of X X^T and X^T X. For an all-zero cloud
    returns ``(0.0, e_1)``.
    """
    X = as_cloud(x)
    d, n = X.shape
    if not np.any(X):
        e = np.zeros(d)
        e[0] = 1.0
        return 0.0, e
    if d <= n:
        lam, u = _top_eigpair(X @ X.T, tol, max_iter)
    else:
        lam, w = _top_eigpair(X.T @ X, tol, max_iter)
        u = X @ w
        u = u / np.linalg.norm(u)
    return float(np.sqrt(lam)), u


def spectral_norm(x, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value of the ``d x n`` matrix of the cloud."""
    return top_singular_pair(x, tol, max_iter)[0]


def random_plane(d: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormalized Gaussian pair spanning a uniformly random 2-plane."""
    if d < 2:
        raise DimensionError("plane rotations need d >= 2")
    u = rng.standard_normal(d)
    v = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    return u, v


def rotate_in_plane(u: np.ndarray, v: np.ndarray, thetas, x) -> np.ndarray:
    """Apply R(theta) for every theta in ``thetas``; returns ``(K, d, n)``.

    R(t) = I + (cos t - 1)(uu^T + vv^T) + sin t (vu^T - uv^T), applied without
    materialising the d x d matrix.
    """
    X = as_cloud(x)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    pu = u @ X
    pv = v @ X
    sym = np.outer(u, pu) + np.outer(v, pv)
    skew = np.outer(v, pu) - np.outer(u, pv)
    c = (np.cos(thetas) - 1.0)[:, None, None]
    s = np.sin(thetas)[:, None, None]
    return X[None] + c * sym[None] + s * skew[None]


def plane_reach(u: np.ndarray, v: np.ndarray, x) -> float:
    """Frobenius norm of the cloud's projection onto span(u, v).

    ``|R(t) X - X| = 2 sin(t/2) * plane_reach`` for t in [0, pi].
    """
    X = as_cloud(x)
    return float(np.sqrt(np.sum((u @ X) ** 2) + np.sum((v @ X) ** 2)))


def angle_for_distance(dist, reach: float) -> np.ndarray:
    """Inverse of the distance formula above; clipped at theta = pi."""
    if reach == 0.0:
        return np.full_like(np.asarray(dist, dtype=float), np.pi)
    return 2.0 * np.arcsin(np.clip(np.asarray(dist, dtype=float) / (2.0 * reach), 0.0, 1.0))


@dataclass(frozen=True)
class PlaneRotation:
    """Rotation by ``theta`` in the plane spanned by orthonormal ``u``, ``v``."""

    u: np.ndarray
    v: np.ndarray
    theta: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != v.shape or u.ndim != 1:
            raise DimensionError("plane vectors must be 1-d arrays of equal length")
        err = max(abs(u @ u - 1.0), abs(v @ v - 1.0), abs(u @ v))
        if err > ORTHO_TOL:
            raise ValueError(f"plane vectors are not orthonormal (error {err:.2e})")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def random(cls, d: int, theta: float, rng: np.random.Generator) -> "PlaneRotation":
        u, v = random_plane(d, rng)
        return cls(u, v, theta)

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    def matrix(self) -> np.ndarray:
        u, v, t = self.u, self.v, self.theta
        return (
            np.eye(self.dim)
            + (np.cos(t) - 1.0) * (np.outer(u, u) + np.outer(v, v))
            + np.sin(t) * (np.outer(v, u) - np.outer(u, v))
        )


def plane_rotation_apply(p: PlaneRotation, x) -> np.ndarray:
    X = as_cloud(x)
    if X.shape[0] != p.dim:
        raise DimensionError(f"plane lives in R^{p.dim}, cloud in R^{X.shape[0]}")
    return rotate_in_plane(p.u, p.v, [p.theta], X)[0]


def orbit_sample(x0, rng: np.random.Generator) -> np.ndarray:
    """A Haar-random point of the orbit ``{U x0 : U in SO(d)}``."""
    X = as_cloud(x0)
    return act(haar_sample(X.shape[0], rng), X)


def orbit_samples(x0, size: int, rng: np.random.Generator, method: str = "auto") -> np.ndarray:
    """Batch of ``size`` Haar orbit points, shape ``(size, d, n)``.

    ``method="haar"`` rotates by full Haar matrices. ``method="frame"`` uses
    that for n < d, U Q0 is a uniform orthonormal n-frame whenever U is Haar on
    SO(d) (Q0 from the thin QR of x0), so only a ``d x n`` QR per sample is
    needed. ``"auto"`` picks the frame route when n < d.
    """
    X = as_cloud(x0)
    d, n = X.shape
    if method == "auto":
        method = "frame" if n < d else "haar"
    if method == "haar":
        return haar_samples(d, size, rng) @ X
    if method != "frame":
        raise ValueError(f"unknown orbit sampling method {method!r}")
    if n >= d:
        raise ValueError("frame sampling needs n < d")
    Q0, R0 = np.linalg.qr(X)
    G = rng.standard_normal((size, d, n))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.einsum("kii->ki", R))
    signs[signs == 0] = 1.0
    return (Q * signs[:, None, :]) @ R0


def sphere_cloud(d: int, n: int, rng: np.random.Generator, radius: float | None = None) -> np.ndarray:
    """Random cloud with every column uniform on the sphere of ``radius`` (default sqrt(d))."""
    r = np.sqrt(d) if radius is None else radius
    X = rng.standard_normal((d, n))
    return X * (r / np.linalg.norm(X, axis=0))
