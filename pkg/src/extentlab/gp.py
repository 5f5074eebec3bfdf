"""Exponential-covariance Gaussian processes: covariances, sampling and kriging.

Distances are planar Euclidean in km on a local equirectangular projection
whose reference latitude is fixed per dataset (the station-set mean by
default) and recorded with every fit.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import numpy as np
from scipy import linalg

EARTH_RADIUS_KM = 6371.0088

JITTER_START = 1e-10
JITTER_MAX = 1e-6

# grid points closer than this to a station are treated as the station itself
COINCIDENT_KM = 1e-6


class CholeskyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GpSpec:
    mean: float = 0.0
    variance: float = 1.0
    decay: float = 1.0

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError("GP variance must be non-negative")
        if not self.decay > 0:
            raise ValueError("GP decay must be positive")


def project_km(sites, ref_lat: float | None = None) -> np.ndarray:
    """Equirectangular (x, y) coordinates in km for a sequence of sites.

    ``sites`` may be :class:`~extentlab.core.Site` objects or an ``(n, 2)``
    array of (lon, lat) degrees.
    """
    if len(sites) and hasattr(sites[0], "lon"):
        ll = np.array([(s.lon, s.lat) for s in sites], dtype=float)
    else:
        ll = np.asarray(sites, dtype=float).reshape(-1, 2)
    if ref_lat is None:
        ref_lat = float(ll[:, 1].mean()) if len(ll) else 0.0
    lon, lat = np.radians(ll[:, 0]), np.radians(ll[:, 1])
    return EARTH_RADIUS_KM * np.column_stack([lon * np.cos(np.radians(ref_lat)), lat])


def distance_matrix(xa: np.ndarray, xb: np.ndarray | None = None) -> np.ndarray:
    """Pairwise Euclidean distances between rows of planar coordinate arrays."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = xa if xb is None else np.atleast_2d(np.asarray(xb, dtype=float))
    diff = xa[:, None, :] - xb[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if xb is xa:
        np.fill_diagonal(d, 0.0)
    return d


def exp_cov(dist: np.ndarray, spec: GpSpec) -> np.ndarray:
    """``variance * exp(-decay * d)`` elementwise."""
    return spec.variance * np.exp(-spec.decay * np.asarray(dist, dtype=float))


def decay_from_dmax(dist: np.ndarray) -> float:
    """Decay ``3 / d_max``: correlation falls to e^-3 at the largest observed separation."""
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] < 2:
        raise ValueError("decay_from_dmax needs at least two sites")
    dmax = float(dist.max())
    if not dmax > 0:
        raise ValueError("all sites coincide; maximum distance is zero")
    return 3.0 / dmax


def cholesky_jitter(cov: np.ndarray, name: str = "covariance", scale: float | None = None):
    """Lower Cholesky factor, adding ``lam * scale`` to the diagonal if needed.

    ``lam`` starts at 1e-10 and grows tenfold up to 1e-6. Returns
    ``(L, lam)``; ``lam`` is 0.0 when no jitter was required.
    """
    cov = np.asarray(cov, dtype=float)
    if scale is None:
        scale = float(np.max(np.abs(np.diag(cov)))) if cov.size else 1.0
        scale = scale or 1.0
    try:
        return linalg.cholesky(cov, lower=True, check_finite=True), 0.0
    except linalg.LinAlgError:
        pass
    lam = JITTER_START
    eye = np.eye(cov.shape[0])
    while lam <= JITTER_MAX * (1 + 1e-9):
        try:
            return linalg.cholesky(cov + lam * scale * eye, lower=True), lam
        except linalg.LinAlgError:
            lam *= 10
    raise CholeskyError(f"Cholesky factorization of {name} ({cov.shape[0]}x{cov.shape[0]}) "
                        f"failed with jitter up to {JITTER_MAX:g}")


def mvn_sample(mean, cov, rng: np.random.Generator, size: int | None = None, name: str = "covariance"):
    """Draw from N(mean, cov); a zero covariance returns the mean exactly."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = mean.shape[0]
    shape = (n,) if size is None else (size, n)
    if not np.any(cov):
        return np.broadcast_to(mean, shape).copy()
    L, _ = cholesky_jitter(cov, name=name)
    z = rng.standard_normal(shape)
    return mean + z @ L.T


def krige_conditional(obs_xy, obs_values, new_xy, spec: GpSpec):
    """Conditional mean and covariance of a GP at ``new_xy`` given noise-free values at ``obs_xy``.

    Coordinates are planar km arrays (see :func:`project_km`).
    """
    new_xy = np.atleast_2d(np.asarray(new_xy, dtype=float))
    c22 = exp_cov(distance_matrix(new_xy), spec)
    prior_mean = np.full(new_xy.shape[0], float(spec.mean))
    obs_values = np.asarray(obs_values, dtype=float)
    if obs_values.size == 0:
        return prior_mean, c22
    obs_xy = np.atleast_2d(np.asarray(obs_xy, dtype=float))
    c11 = exp_cov(distance_matrix(obs_xy), spec)
    c21 = exp_cov(distance_matrix(new_xy, obs_xy), spec)
    if spec.variance == 0:
        return prior_mean, c22
    L, _ = cholesky_jitter(c11, name="observed-site covariance")
    a = linalg.solve_triangular(L, c21.T, lower=True)
    resid = linalg.solve_triangular(L, obs_values - spec.mean, lower=True)
    mu = prior_mean + a.T @ resid
    cov = c22 - a.T @ a
    return mu, 0.5 * (cov + cov.T)


def rho_from_z(z):
    """Inverse of ``z = log((1 + rho) / (1 - rho))``."""
    return np.tanh(np.asarray(z, dtype=float) / 2.0)


def z_from_rho(rho):
    return 2.0 * np.arctanh(np.asarray(rho, dtype=float))


def sigma2_from_z(z):
    """Inverse of ``z = log(sigma2)``."""
    return np.exp(np.asarray(z, dtype=float))


def z_from_sigma2(s2):
    return np.log(np.asarray(s2, dtype=float))


class KrigingPlan:
    """Reusable conditional-sampling operator for a fixed (obs sites, new sites, decay).

    With a shared decay the conditional *correlation* structure does not
    depend on the GP variance or mean, so one factorization serves every
    field and every posterior draw.  New sites coinciding with an observed
    site copy the observed value exactly.
    """

    def __init__(self, obs_xy, new_xy, decay: float):
        obs_xy = np.atleast_2d(np.asarray(obs_xy, dtype=float))
        new_xy = np.atleast_2d(np.asarray(new_xy, dtype=float))
        self.n_obs, self.n_new = obs_xy.shape[0], new_xy.shape[0]
        self.decay = float(decay)
        d_no = distance_matrix(new_xy, obs_xy)
        nearest = d_no.argmin(axis=1)
        coincident = d_no[np.arange(self.n_new), nearest] <= COINCIDENT_KM
        self.snap_new = np.flatnonzero(coincident)
        self.snap_obs = nearest[coincident]
        self.free = np.flatnonzero(~coincident)
        unit = GpSpec(0.0, 1.0, decay)
        r11 = exp_cov(distance_matrix(obs_xy), unit)
        r21 = exp_cov(d_no[self.free], unit)
        r22 = exp_cov(distance_matrix(new_xy[self.free]), unit)
        L11, _ = cholesky_jitter(r11, name="station correlation")
        a = linalg.solve_triangular(L11, r21.T, lower=True)
        # weights map (obs - mean) to conditional-mean offsets at free points
        self.weights = linalg.solve_triangular(L11.T, a, lower=False).T
        cond = r22 - a.T @ a
        cond = 0.5 * (cond + cond.T)
        if self.free.size:
            self.chol, self.jitter = cholesky_jitter(cond, name="conditional grid correlation", scale=1.0)
        else:
            self.chol, self.jitter = np.zeros((0, 0)), 0.0

    def sample(self, obs_values, mean, variance, z=None, rng=None) -> np.ndarray:
        """Conditional draws at the new sites.

        ``obs_values`` is ``(n_obs,)`` or ``(k, n_obs)`` (k independent fields
        sharing mean and variance).  Standard-normal innovations ``z`` of
        shape ``(k, n_free)`` may be supplied; otherwise they come from ``rng``.
        """
        y = np.asarray(obs_values, dtype=float)
        single = y.ndim == 1
        y = np.atleast_2d(y)
        k = y.shape[0]
        out = np.empty((k, self.n_new))
        out[:, self.snap_new] = y[:, self.snap_obs]
        if self.free.size:
            if z is None:
                z = rng.standard_normal((k, self.free.size))
            cm = mean + (y - mean) @ self.weights.T
            sd = float(np.sqrt(variance))
            out[:, self.free] = cm + sd * (z @ self.chol.T)
        return out[0] if single else out


_plan_cache: dict[str, KrigingPlan] = {}
_plan_lock = threading.Lock()


def kriging_plan(obs_xy, new_xy, decay: float) -> KrigingPlan:
    """Cached :class:`KrigingPlan` keyed by coordinates and decay."""
    h = hashlib.sha1()
    for arr in (np.ascontiguousarray(obs_xy, dtype=float), np.ascontiguousarray(new_xy, dtype=float)):
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    h.update(np.float64(decay).tobytes())
    key = h.hexdigest()
    with _plan_lock:
        plan = _plan_cache.get(key)
        if plan is None:
            plan = KrigingPlan(obs_xy, new_xy, decay)
            if len(_plan_cache) > 16:
                _plan_cache.clear()
            _plan_cache[key] = plan
        return plan

