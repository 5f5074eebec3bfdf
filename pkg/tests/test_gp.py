import math
import time

import numpy as np
import pytest

from extentlab.core import Site
from extentlab.gp import (
    CholeskyError, GpSpec, KrigingPlan, cholesky_jitter, decay_from_dmax, distance_matrix, exp_cov,
    krige_conditional, mvn_sample, project_km, rho_from_z, sigma2_from_z, z_from_rho, z_from_sigma2,
)


def test_exp_cov_values():
    spec = GpSpec(0.0, 2.5, 0.01)
    d = np.array([[0.0, 300.0]])
    c = exp_cov(d, spec)
    assert c[0, 0] == 2.5
    assert c[0, 1] == pytest.approx(2.5 * math.exp(-3), rel=1e-15)
    assert math.exp(-3) == pytest.approx(0.049787, abs=1e-6)


def test_exp_cov_elementwise_oracle():
    rng = np.random.default_rng(1)
    xy = rng.uniform(0, 200, (18, 2))
    d = distance_matrix(xy)
    phi = decay_from_dmax(d)
    c = exp_cov(d, GpSpec(0.0, 1.7, phi))
    for i in range(18):
        for j in range(18):
            dij = math.hypot(*(xy[i] - xy[j]))
            assert c[i, j] == pytest.approx(1.7 * math.exp(-phi * dij), rel=1e-12)


def test_decay_from_dmax():
    assert decay_from_dmax(np.array([[0, 300.0], [300.0, 0]])) == pytest.approx(0.01)
    xy = np.array([[0, 0], [0, 0], [50, 0]], float)
    assert decay_from_dmax(distance_matrix(xy)) == pytest.approx(3 / 50)
    rng = np.random.default_rng(3)
    xy = rng.uniform(0, 300, (18, 2))
    dmax = max(math.hypot(*(xy[i] - xy[j])) for i in range(18) for j in range(18))
    assert decay_from_dmax(distance_matrix(xy)) == pytest.approx(3 / dmax, rel=1e-12)
    with pytest.raises(ValueError):
        decay_from_dmax(np.zeros((1, 1)))
    with pytest.raises(ValueError):
        decay_from_dmax(np.zeros((2, 2)))


def test_projection_distance_is_close_to_great_circle():
    a, b = Site("a", -1.0, 41.0, 0), Site("b", 0.0, 42.0, 0)
    xy = project_km([a, b], ref_lat=41.5)
    d = distance_matrix(xy)[0, 1]
    # haversine
    p1, p2 = math.radians(41), math.radians(42)
    h = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(math.radians(1) / 2) ** 2
    gc = 2 * 6371.0088 * math.asin(math.sqrt(h))
    assert abs(d - gc) / gc < 2e-3


def test_mvn_zero_covariance_returns_mean():
    m = np.array([1.0, -2.0])
    assert np.array_equal(mvn_sample(m, np.zeros((2, 2)), np.random.default_rng(0)), m)


def test_mvn_moments():
    rng = np.random.default_rng(11)
    x = mvn_sample(np.zeros(1), np.array([[4.0]]), rng, size=100_000)
    assert 1.97 <= x.std() <= 2.03
    x = mvn_sample(np.zeros(2), np.array([[1, 0.9], [0.9, 1.0]]), rng, size=100_000)
    assert abs(np.corrcoef(x.T)[0, 1] - 0.9) < 0.02


def test_cholesky_jitter_and_failure_names_matrix():
    c = np.ones((3, 3))          # rank one, needs jitter
    L, lam = cholesky_jitter(c)
    assert 0 < lam <= 1e-6
    np.testing.assert_allclose(L @ L.T, c, atol=1e-5)
    with pytest.raises(CholeskyError, match="my matrix"):
        cholesky_jitter(-np.eye(2), name="my matrix")


def test_krige_interpolates_observations():
    rng = np.random.default_rng(5)
    xy = rng.uniform(0, 100, (18, 2))
    spec = GpSpec(1.0, 3.0, 3 / 140)
    y = rng.normal(0, 2, 18)
    mu, cov = krige_conditional(xy, y, xy, spec)
    assert np.max(np.abs(mu - y)) < 1e-8
    assert np.max(np.diag(cov)) <= 1e-6 * spec.variance


def test_krige_single_observation_closed_form():
    spec = GpSpec(0.0, 1.0, 0.02)
    y = 3.0
    mu, cov = krige_conditional([[0, 0]], [y], [[150.0, 0]], spec)
    assert mu[0] == pytest.approx(math.exp(-3) * y, rel=1e-12)
    assert cov[0, 0] == pytest.approx(1 - math.exp(-6), rel=1e-12)


def test_krige_empty_observations_return_prior():
    spec = GpSpec(2.0, 1.5, 0.1)
    new = np.array([[0, 0], [5, 0]], float)
    mu, cov = krige_conditional(np.zeros((0, 2)), [], new, spec)
    np.testing.assert_array_equal(mu, [2.0, 2.0])
    np.testing.assert_allclose(cov, exp_cov(distance_matrix(new), spec))


def test_plan_matches_direct_kriging_distribution():
    rng = np.random.default_rng(2)
    obs = rng.uniform(0, 100, (6, 2))
    new = np.vstack([rng.uniform(0, 100, (5, 2)), obs[2:3]])
    decay = 0.03
    y = rng.normal(size=6)
    plan = KrigingPlan(obs, new, decay)
    assert plan.snap_new.tolist() == [5] and plan.snap_obs.tolist() == [2]
    draws = plan.sample(np.tile(y, (40_000, 1)), 0.5, 2.0, rng=rng)
    assert np.all(draws[:, 5] == y[2])
    mu, cov = krige_conditional(obs, y, new[:5], GpSpec(0.5, 2.0, decay))
    np.testing.assert_allclose(draws[:, :5].mean(0), mu, atol=0.03)
    np.testing.assert_allclose(np.cov(draws[:, :5].T), cov, atol=0.05)


def test_plan_zero_innovations_give_conditional_mean():
    rng = np.random.default_rng(4)
    obs = rng.uniform(0, 50, (4, 2))
    new = rng.uniform(0, 50, (7, 2))
    y = rng.normal(size=4)
    plan = KrigingPlan(obs, new, 0.05)
    out = plan.sample(y, 1.0, 3.0, z=np.zeros((1, 7)))
    mu, _ = krige_conditional(obs, y, new, GpSpec(1.0, 3.0, 0.05))
    np.testing.assert_allclose(out, mu, atol=1e-10)


def test_transforms():
    assert rho_from_z(0.0) == 0.0 and sigma2_from_z(0.0) == 1.0
    z = z_from_rho(0.9)
    assert z == pytest.approx(math.log(19), rel=1e-12)
    assert rho_from_z(z) == pytest.approx(0.9, abs=1e-12)
    assert z_from_sigma2(sigma2_from_z(1.3)) == pytest.approx(1.3, abs=1e-12)
    zs = np.linspace(0, 30, 200)
    r = rho_from_z(zs)
    assert np.all(np.diff(r) >= 0) and np.all(r <= 1)


def test_kriging_runtime_on_a_large_grid():
    rng = np.random.default_rng(9)
    obs = rng.uniform(0, 200, (18, 2))
    new = rng.uniform(0, 200, (1000, 2))
    t0 = time.perf_counter()
    krige_conditional(obs, rng.normal(size=18), new, GpSpec(0, 1, 3 / 280))
    assert time.perf_counter() - t0 < 5.0
