"""Pure-numpy kernels; the reference implementation for the compiled ones.

Both backends perform the same floating-point operations in the same order,
so their outputs are bit-identical.
"""
import numpy as np


def ar1_anomalies(z, rho, sd, sd0):
    """AR(1) anomalies along the last axis.

    ``z`` is (S, T, L) standard normal; ``rho``, ``sd`` (innovation sd) and
    ``sd0`` (first-day sd) are per-site (S,).  Returns
    ``a[..., 0] = sd0 * z[..., 0]`` and ``a[..., l] = rho * a[..., l-1] + sd * z[..., l]``.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    S, T, L = z.shape
    rho = np.ascontiguousarray(rho, dtype=np.float64)[:, None]
    sd = np.ascontiguousarray(sd, dtype=np.float64)[:, None]
    sd0 = np.ascontiguousarray(sd0, dtype=np.float64)[:, None]
    out = np.empty_like(z)
    if L == 0:
        return out
    out[:, :, 0] = sd0 * z[:, :, 0]
    for l in range(1, L):
        out[:, :, l] = rho * out[:, :, l - 1] + sd * z[:, :, l]
    return out


def persist_indicator(d, c, lo, hi):
    """``out[..., l] = 1`` iff ``d[..., l + o] > c`` for every ``o`` in ``lo..hi``.

    Days whose window leaves the last axis are 0.  Returns uint8.
    """
    if lo > 0 or hi < 0:
        raise ValueError("window offsets must satisfy lo <= 0 <= hi")
    d = np.ascontiguousarray(d, dtype=np.float64)
    L = d.shape[-1]
    exc = d > c
    out = np.zeros(d.shape, dtype=np.uint8)
    first, last = -lo, L - hi          # valid l in [first, last)
    if last <= first:
        return out
    acc = np.ones(d.shape[:-1] + (last - first,), dtype=bool)
    for o in range(lo, hi + 1):
        acc &= exc[..., first + o:last + o]
    out[..., first:last] = acc
    return out
