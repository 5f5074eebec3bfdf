"""Convergence diagnostics: split R-hat and autocorrelation-based ESS."""
from __future__ import annotations

import numpy as np


def autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased (divide-by-n) autocovariance of a 1-D series, FFT based."""
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    return np.fft.irfft(f * np.conj(f), nfft)[:n] / n


def ess(chains) -> float:
    """Effective sample size with Geyer's initial monotone sequence estimator.

    ``chains`` is a 1-D series or a ``(n_chains, n_draws)`` array; several
    chains are combined as in Stan (within-chain autocovariance against the
    pooled variance estimate).
    """
    x = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = x.shape
    if n < 4:
        return float(m * n)
    acov = np.mean([autocovariance(c) for c in x], axis=0)
    if m == 1:
        if acov[0] <= 0:
            return float(n)
        rho = acov / acov[0]
    else:
        w = x.var(axis=1, ddof=1).mean()
        var_plus = w * (n - 1) / n + x.mean(axis=1).var(ddof=1)
        if var_plus <= 0:
            return float(m * n)
        rho = 1.0 - (w - acov) / var_plus
        rho[0] = 1.0
    k = (n - 1) // 2
    pair = rho[0:2 * k:2] + rho[1:2 * k:2]
    neg = np.flatnonzero(pair < 0)
    if neg.size:
        pair = pair[:neg[0]]
    pair = np.minimum.accumulate(pair)
    tau = -1.0 + 2.0 * pair.sum()
    tau = max(tau, 1.0 / np.log10(m * n + 10))
    return float(m * n / tau)


def split_rhat(chains) -> float:
    """Split-chain potential scale reduction factor; 1.0 for identical chains."""
    x = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = x.shape
    half = n // 2
    if half < 2:
        return float("nan")
    x = np.vstack([x[:, :half], x[:, n - half:]])
    w = x.var(axis=1, ddof=1).mean()
    b = half * x.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (half - 1) / half * w + b / half
    return float(np.sqrt(var_plus / w))


def diagnostics(store, names=None) -> list[dict]:
    """Per-scalar split R-hat, ESS and posterior mean/sd."""
    from .params import FIXED_NAMES, VARIANCE_NAMES

    if names is None:
        names = list(FIXED_NAMES) + ["z_rho_mean", "z_sigma_mean"] + list(VARIANCE_NAMES)
    rows = []
    for name in names:
        x = store.by_chain(name)
        rows.append({
            "parameter": name,
            "mean": float(x.mean()),
            "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
            "rhat": split_rhat(x) if x.shape[0] >= 2 else float("nan"),
            "ess": ess(x),
        })
    return rows
