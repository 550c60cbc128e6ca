import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from orbitadv.rotgroup import (
    DimensionError,
    PlaneRotation,
    act,
    angle_for_distance,
    as_cloud,
    check_rotation,
    frobenius_distance,
    haar_sample,
    haar_samples,
    orbit_samples,
    plane_reach,
    plane_rotation_apply,
    random_plane,
    rotate_in_plane,
    spectral_norm,
    sphere_cloud,
    top_singular_pair,
)

seeds = st.integers(0, 2**32 - 1)


@given(d=st.integers(1, 24), seed=seeds)
@settings(max_examples=60, deadline=None)
def test_haar_sample_is_rotation(d, seed):
    U = haar_sample(d, np.random.default_rng(seed))
    assert np.linalg.norm(U.T @ U - np.eye(d)) <= 1e-10
    assert abs(np.linalg.det(U) - 1.0) <= 1e-8
    check_rotation(U)


def test_haar_sample_matches_batch():
    a = haar_sample(5, np.random.default_rng(11))
    b = haar_samples(5, 1, np.random.default_rng(11))[0]
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("d", [0, -3])
def test_haar_rejects_bad_dimension(d):
    with pytest.raises(DimensionError):
        haar_sample(d, np.random.default_rng(0))


def test_check_rotation_rejects_reflection():
    R = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError, match="determinant"):
        check_rotation(R)
    with pytest.raises(ValueError, match="orthogonal"):
        check_rotation(2 * np.eye(3))


def test_haar_first_moments():
    d, N = 6, 40_000
    U = haar_samples(d, N, np.random.default_rng(1))
    # E U = 0 and E U_ij^2 = 1/d; each entry mean has sd 1/sqrt(dN)
    assert np.abs(U.mean(axis=0)).max() < 5 / math.sqrt(d * N)
    np.testing.assert_allclose((U ** 2).mean(axis=0), 1 / d, atol=5 * math.sqrt(2 / (d * d * N)))


def test_haar_d3_entry_is_uniform():
    # a uniform point on S^2 has a uniform coordinate on [-1, 1]
    U = haar_samples(3, 20_000, np.random.default_rng(2))
    assert sps.kstest(U[:, 0, 0], "uniform", args=(-1, 2)).pvalue > 1e-3


def test_haar_d2_angle_is_uniform():
    U = haar_samples(2, 20_000, np.random.default_rng(3))
    angles = np.arctan2(U[:, 1, 0], U[:, 0, 0])
    assert sps.kstest(angles, "uniform", args=(-np.pi, 2 * np.pi)).pvalue > 1e-3


def test_haar_left_invariance():
    rng = np.random.default_rng(4)
    V = haar_sample(5, rng)
    a = (V @ haar_samples(5, 20_000, rng))[:, 0, 0]
    b = haar_samples(5, 20_000, rng)[:, 0, 0]
    assert sps.ks_2samp(a, b).pvalue > 1e-3


@given(d=st.sampled_from([2, 8, 32]), n=st.sampled_from([1, 4, 16]), seed=seeds)
@settings(max_examples=60, deadline=None)
def test_action_is_lipschitz_in_rotation(d, n, seed):
    rng = np.random.default_rng(seed)
    U, V = haar_samples(d, 2, rng)
    x = rng.standard_normal((d, n)) * rng.uniform(0.1, 10)
    lhs = np.linalg.norm(act(U, x) - act(V, x))
    assert lhs <= frobenius_distance(U, V) * spectral_norm(x) + 1e-9


@given(d=st.integers(2, 12), n=st.integers(1, 6), seed=seeds)
@settings(max_examples=40, deadline=None)
def test_action_composes_and_preserves_gram(d, n, seed):
    rng = np.random.default_rng(seed)
    U, V = haar_samples(d, 2, rng)
    x = rng.standard_normal((d, n))
    np.testing.assert_allclose(act(U, act(V, x)), act(U @ V, x), atol=1e-12)
    y = act(U, x)
    np.testing.assert_allclose(y.T @ y, x.T @ x, atol=1e-10)


def test_act_shape_checks():
    with pytest.raises(DimensionError):
        act(np.eye(3), np.ones((4, 2)))
    assert as_cloud(np.ones(3)).shape == (3, 1)
    with pytest.raises(DimensionError):
        as_cloud(np.ones((2, 2, 2)))


@given(d=st.integers(1, 40), n=st.integers(1, 40), seed=seeds)
@settings(max_examples=60, deadline=None)
def test_spectral_norm_matches_svd(d, n, seed):
    x = np.random.default_rng(seed).standard_normal((d, n))
    ref = np.linalg.svd(x, compute_uv=False)[0]
    assert abs(spectral_norm(x) - ref) <= 1e-9 * max(ref, 1.0)


def test_spectral_pair_vector_and_zero():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((7, 3))
    s, u = top_singular_pair(x)
    assert abs(np.linalg.norm(u) - 1) < 1e-12
    assert abs(np.linalg.norm(x.T @ u) - s) < 1e-9
    assert spectral_norm(np.zeros((4, 2))) == 0.0


@pytest.mark.parametrize("d,n", [(200, 10), (10, 200), (100, 100)])
def test_spectral_ratio_of_random_inputs(d, n):
    # |x|_sp / |x| sits between 1/sqrt(min(d,n)) and a small multiple of it
    x = np.random.default_rng(6).standard_normal((d, n))
    r = spectral_norm(x) / np.linalg.norm(x) * math.sqrt(min(d, n))
    assert 1.0 <= r <= 2.5


@given(d=st.integers(2, 16), theta=st.floats(-2 * np.pi, 2 * np.pi), seed=seeds)
@settings(max_examples=60, deadline=None)
def test_plane_rotation_matrix(d, theta, seed):
    rng = np.random.default_rng(seed)
    p = PlaneRotation.random(d, theta, rng)
    R = p.matrix()
    check_rotation(R)
    x = rng.standard_normal((d, 3))
    np.testing.assert_allclose(plane_rotation_apply(p, x), R @ x, atol=1e-12)


@given(d=st.integers(2, 16), n=st.integers(1, 5), theta=st.floats(0, np.pi), seed=seeds)
@settings(max_examples=60, deadline=None)
def test_plane_distance_formula(d, n, theta, seed):
    rng = np.random.default_rng(seed)
    u, v = random_plane(d, rng)
    x = rng.standard_normal((d, n))
    reach = plane_reach(u, v, x)
    moved = rotate_in_plane(u, v, [theta], x)[0]
    assert abs(np.linalg.norm(moved - x) - 2 * math.sin(theta / 2) * reach) <= 1e-10 * (1 + reach)
    dist = 2 * math.sin(theta / 2) * reach
    if reach > 1e-6:
        assert abs(float(angle_for_distance(dist, reach)) - theta) <= 1e-6


def test_plane_rotation_rejects_non_orthonormal():
    with pytest.raises(ValueError, match="orthonormal"):
        PlaneRotation(np.array([1.0, 0, 0]), np.array([1.0, 1.0, 0]) / math.sqrt(2), 0.3)
    with pytest.raises(DimensionError):
        random_plane(1, np.random.default_rng(0))


def test_frame_route_matches_haar_route():
    rng = np.random.default_rng(7)
    x0 = rng.standard_normal((6, 2))
    a = orbit_samples(x0, 20_000, rng, method="frame")
    b = orbit_samples(x0, 20_000, rng, method="haar")
    for idx in [(0, 0), (3, 1)]:
        assert sps.ks_2samp(a[:, idx[0], idx[1]], b[:, idx[0], idx[1]]).pvalue > 1e-3
    # both stay on the orbit: the Gram matrix is invariant
    np.testing.assert_allclose(np.einsum("kdi,kdj->kij", a, a), np.broadcast_to(x0.T @ x0, (20_000, 2, 2)),
                               atol=1e-10)


def test_orbit_method_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        orbit_samples(np.ones((3, 3)), 2, rng, method="frame")
    with pytest.raises(ValueError):
        orbit_samples(np.ones((3, 1)), 2, rng, method="bogus")


def test_sphere_cloud_norms():
    x = sphere_cloud(9, 5, np.random.default_rng(0))
    np.testing.assert_allclose(np.linalg.norm(x, axis=0), 3.0, rtol=1e-12)
    y = sphere_cloud(4, 2, np.random.default_rng(0), radius=2.5)
    np.testing.assert_allclose(np.linalg.norm(y, axis=0), 2.5, rtol=1e-12)
