import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy import stats as sps

from orbitadv.convnet import NetworkSpec, sample_network
from orbitadv.isolab import (
    check_lipschitz,
    concentration_bound,
    concentration_experiment,
    blowup_experiment,
    hemisphere,
    isoperimetric_bound,
    last_layer_variance,
    sphere_tail_check,
    sudakov_check,
    top_left_entry,
    variance_check_last_layer,
    whole_orbit,
)
from orbitadv.rotgroup import orbit_samples, sphere_cloud

seeds = st.integers(0, 2**32 - 1)


def expected_max_iid(m):
    """E max of m independent standard normals by quadrature."""
    f = lambda x: x * m * sps.norm.pdf(x) * sps.norm.cdf(x) ** (m - 1)
    return integrate.quad(f, -12, 12, limit=200)[0]


def test_bounds_closed_form():
    assert concentration_bound(34, 0.5, 1.0) == pytest.approx(math.exp(-32 * 0.25 / 8))
    assert isoperimetric_bound(34, 1.0, 0.5, 1.0) == pytest.approx(1 - math.exp(-32 * 0.25 / 8))
    assert isoperimetric_bound(10, 0.0, 0.5, 1.0) == 0.0


def test_lipschitz_check():
    rng = np.random.default_rng(0)
    assert check_lipschitz(top_left_entry, 1.0, 6, rng) <= 1.0
    with pytest.raises(ValueError, match="Lipschitz"):
        check_lipschitz(lambda U: 3 * U[..., 0, 0] + 3 * U[..., 0, 1], 1.0, 6, rng)


def test_concentration_small():
    recs = concentration_experiment(top_left_entry, 1.0, 8, [0.25, 0.5], 4000, np.random.default_rng(1))
    assert [r.epsilon for r in recs] == [0.25, 0.5]
    for r in recs:
        assert r.within_noise
        assert r.empirical_tail >= 0 and r.samples == 4000
    assert recs[1].empirical_tail <= recs[0].empirical_tail
    with pytest.raises(ValueError):
        concentration_experiment(top_left_entry, 1.0, 8, [0.5], 999, np.random.default_rng(1))


def test_hemisphere_distance_against_rotation_to_equator():
    d, r = 7, 2.0
    Z = orbit_samples(np.r_[r, np.zeros(d - 1)][:, None], 200, np.random.default_rng(2))
    A = hemisphere(d, r)
    dist = A.distance(Z)
    for k in range(len(Z)):
        z = Z[k, :, 0]
        if z[0] >= 0:
            assert A.contains(Z[k:k + 1])[0] and dist[k] == 0.0
            continue
        # nearest member: drop the first coordinate and rescale onto the sphere
        w = z.copy()
        w[0] = 0.0
        w *= r / np.linalg.norm(w)
        assert dist[k] == pytest.approx(np.linalg.norm(z - w), abs=1e-10)


def test_blowup_certificates_are_sound():
    d = 12
    r = math.sqrt(d)
    x0 = np.zeros((d, 1))
    x0[0, 0] = r
    A = hemisphere(d, r)
    eps = [0.2 * r, 0.5 * r, r]
    res = blowup_experiment(A, x0, eps, 600, 300, np.random.default_rng(3), k_probe=32)
    assert res.lipschitz == pytest.approx(r)
    lows = [rec.blowup_lower for rec in res.records]
    assert lows == sorted(lows)
    for rec in res.records:
        assert rec.agreement >= 0.95
        assert 0.3 < rec.measure < 0.7
    for c in res.certificates:
        assert A.contains(c.witness[None])[0]
        assert np.linalg.norm(c.witness) == pytest.approx(r)
        assert np.linalg.norm(c.point - c.witness) == pytest.approx(c.distance, abs=1e-12)
        # a certificate never claims less than the true distance to the set
        assert A.distance(c.point[None])[0] <= c.distance + 1e-9


def test_blowup_of_whole_orbit():
    x0 = sphere_cloud(5, 2, np.random.default_rng(0))
    res = blowup_experiment(whole_orbit(), x0, [0.1], 200, 100, np.random.default_rng(0), k_probe=4)
    rec = res.records[0]
    assert rec.measure == 1.0 and rec.blowup_lower == 1.0 and rec.agreement is None
    with pytest.raises(ValueError):
        blowup_experiment(whole_orbit(), np.zeros((5, 1)), [0.1], 10, 10, np.random.default_rng(0))


@pytest.mark.parametrize("m", [2, 16, 64])
def test_sudakov_matches_iid_maximum(m):
    rec = sudakov_check(np.eye(m), math.sqrt(2), 100_000, np.random.default_rng(m))
    assert abs(rec.estimate - expected_max_iid(m)) < 5 * rec.stderr
    assert 0.45 <= rec.ratio <= 1.0


def test_sudakov_rejects_close_points():
    with pytest.raises(ValueError, match="apart"):
        sudakov_check(np.array([[0.0, 0.0], [0.5, 0.0]]), 1.0, 100, np.random.default_rng(0))
    single = sudakov_check(np.ones((1, 3)), 1.0, 1000, np.random.default_rng(0))
    assert math.isnan(single.ratio)


def test_sphere_tail_d3_exact():
    # in d = 3, <x, y> / 3 is uniform on [-1, 1]
    recs = sphere_tail_check(3, [-1.5, 0.0, 1.5], 100_000, np.random.default_rng(4))
    for rec in recs:
        exact = (1 - rec.t / 3) / 2
        assert abs(rec.empirical_tail - exact) < 5 * math.sqrt(exact * (1 - exact) / rec.samples)


def test_sphere_tail_respects_bound():
    for rec in sphere_tail_check(64, [0.0, 8.0, 16.0, 24.0], 50_000, np.random.default_rng(5)):
        assert rec.within_noise
        assert rec.bound == pytest.approx(math.exp(-rec.t ** 2 / 128))


@given(seed=seeds)
@settings(max_examples=10, deadline=None)
def test_single_point_variance_is_squared_norm(seed):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal((1, 20))
    psi *= rng.uniform(0.2, 2.0) / np.linalg.norm(psi)
    rec = last_layer_variance(psi, 20_000, rng)
    assert abs(rec.variance - np.sum(psi ** 2)) < 5 * rec.stderr


def test_last_layer_variance_check():
    arch = NetworkSpec.build(32, 4, [dict(width=2, stride=2, out_channels=64),
                                     dict(width=None, out_channels=1, activation="identity")])
    rng = np.random.default_rng(6)
    x0 = sphere_cloud(32, 4, rng)
    pts = orbit_samples(x0, 4, rng)
    rec = variance_check_last_layer(arch, pts, 20_000, rng)
    assert rec.points == 4 and rec.max_feature_norm <= 2
    assert rec.within_noise
    w = sample_network(arch, rng)
    with pytest.raises(ValueError, match="<= 2"):
        variance_check_last_layer(arch, 10 * pts, 100, rng, weights=w)
