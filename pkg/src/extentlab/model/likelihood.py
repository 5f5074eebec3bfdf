"""Mean surface, conditional mean and AR(1) Gaussian log-likelihood."""
from __future__ import annotations

import numpy as np

from .data import ModelData, harmonics
from .params import ModelParameters

LOG2PI = float(np.log(2.0 * np.pi))


def mean_surface(fixed, elev, years, harm, b0, a, psi, eta):
    """Mean temperature ``m`` shaped (n_sites, n_years, n_days).

    Parameters
    ----------
    fixed : (beta0, beta1, beta2, beta3, alpha)
    elev : (n,) elevations in m
    years : (T,) year indices ``t`` entering the trend terms
    harm : (L, 2) seasonal harmonics for the days
    b0, a : (n,) local intercept and trend fields
    psi : (T,) yearly intercepts
    eta : (T, n) local yearly intercepts
    """
    beta0, beta1, beta2, beta3, alpha = fixed
    years = np.asarray(years, dtype=float)
    season = beta1 * harm[:, 0] + beta2 * harm[:, 1]                     # (L,)
    yearly = (beta0 + alpha * years[None, :] + beta3 * np.asarray(elev)[:, None]
              + np.asarray(b0)[:, None] + np.asarray(a)[:, None] * years[None, :]
              + np.asarray(psi)[None, :] + np.asarray(eta).T)             # (n, T)
    return yearly[:, :, None] + season[None, None, :]


def model_mean(params: ModelParameters, data: ModelData) -> np.ndarray:
    return mean_surface(params.fixed, data.elev, data.years, harmonics(data.season),
                        params.beta0_field, params.alpha_field, params.psi,
                        params.local_intercepts)


def conditional_mean(params: ModelParameters, data: ModelData, i: int, t: int, l: int, y_prev=None) -> float:
    """``m[t,l](s_i) + rho(s_i) * (y_prev - m[t,l-1](s_i))`` for station ``i``.

    ``t`` and ``l`` are 1-based.  Without a predecessor (``l == 1`` or
    ``y_prev`` missing) the stationary mean ``m[t,l](s_i)`` is returned.
    """
    m = model_mean(params, data)[i, t - 1]
    if l == 1 or y_prev is None or not np.isfinite(y_prev):
        return float(m[l - 1])
    return float(m[l - 1] + params.rho[i] * (y_prev - m[l - 2]))


def day_masks(Y: np.ndarray):
    """Masks of days scored conditionally (predecessor observed) and marginally."""
    valid = np.isfinite(Y)
    prev = np.zeros_like(valid)
    prev[..., 1:] = valid[..., :-1]
    cond = valid & prev
    marg = valid & ~prev
    return cond, marg


def anomaly_stats(anom: np.ndarray, cond: np.ndarray, marg: np.ndarray) -> dict:
    """Per-site sufficient statistics of the AR(1) likelihood in (rho, sigma2)."""
    a = np.where(np.isfinite(anom), anom, 0.0)
    prev = np.zeros_like(a)
    prev[..., 1:] = a[..., :-1]
    ax = (1, 2)
    return {
        "n_marg": marg.sum(axis=ax).astype(float),
        "s_marg": np.where(marg, a * a, 0.0).sum(axis=ax),
        "n_cond": cond.sum(axis=ax).astype(float),
        "s00": np.where(cond, a * a, 0.0).sum(axis=ax),
        "s01": np.where(cond, a * prev, 0.0).sum(axis=ax),
        "s11": np.where(cond, prev * prev, 0.0).sum(axis=ax),
    }


def site_loglik(rho, sigma2, n_marg, s_marg, n_cond, s00, s01, s11):
    """AR(1) log-likelihood of one or more sites from their sufficient statistics.

    First days (or days after a gap) use the stationary law
    N(0, sigma2 / (1 - rho^2)); others N(rho * previous, sigma2).
    """
    one_m = 1.0 - rho * rho
    quad = one_m * s_marg + s00 - 2.0 * rho * s01 + rho * rho * s11
    return (-0.5 * (n_marg + n_cond) * (LOG2PI + np.log(sigma2))
            + 0.5 * n_marg * np.log(one_m) - 0.5 * quad / sigma2)


def log_likelihood(params: ModelParameters, data: ModelData) -> float:
    """Sum of Gaussian log-densities over observed days; missing days contribute nothing."""
    anom = data.Y - model_mean(params, data)
    cond, marg = day_masks(data.Y)
    st = anomaly_stats(anom, cond, marg)
    return float(np.sum(site_loglik(params.rho, params.sigma2, **st)))
