# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels mirroring :mod:`extentlab._kernels._pykernels`."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def ar1_anomalies(z, rho, sd, sd0):
    cdef const double[:, :, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(rho, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(sd, dtype=np.float64)
    cdef const double[::1] s0 = np.ascontiguousarray(sd0, dtype=np.float64)
    cdef Py_ssize_t S = zv.shape[0], T = zv.shape[1], L = zv.shape[2]
    out = np.empty((S, T, L), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    cdef Py_ssize_t s, t, l
    cdef double r, sig, prev
    if L == 0:
        return out
    with nogil:
        for s in range(S):
            r = rv[s]
            sig = sv[s]
            for t in range(T):
                prev = s0[s] * zv[s, t, 0]
                ov[s, t, 0] = prev
                for l in range(1, L):
                    prev = r * prev + sig * zv[s, t, l]
                    ov[s, t, l] = prev
    return out


def persist_indicator(d, double c, Py_ssize_t lo, Py_ssize_t hi):
    if lo > 0 or hi < 0:
        raise ValueError("window offsets must satisfy lo <= 0 <= hi")
    arr = np.ascontiguousarray(d, dtype=np.float64)
    shape = arr.shape
    cdef Py_ssize_t L = shape[len(shape) - 1] if arr.ndim else 0
    cdef Py_ssize_t N = arr.size // L if L else 0
    cdef const double[:, ::1] dv = arr.reshape(N, L)
    out = np.zeros((N, L), dtype=np.uint8)
    cdef unsigned char[:, ::1] ov = out
    cdef Py_ssize_t i, m, run, w = hi - lo + 1
    with nogil:
        for i in range(N):
            # run = number of consecutive exceedances ending at day m; the
            # window of day m - hi holds iff that run covers all w days
            run = 0
            for m in range(L):
                run = (run + 1) * (dv[i, m] > c)
                if m >= w - 1:
                    ov[i, m - hi] = run >= w
    return out.reshape(shape)
