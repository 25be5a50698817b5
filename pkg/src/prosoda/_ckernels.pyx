# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; drop-in replacements for ``prosoda._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, log, INFINITY

cnp.import_array()


def nccf_matrix(x, Py_ssize_t n_frames, Py_ssize_t hop, Py_ssize_t win,
                Py_ssize_t lag_min, Py_ssize_t lag_max):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n_lags = lag_max - lag_min + 1
    out = np.zeros((n_frames, n_lags))
    if n_frames == 0:
        return out
    cdef Py_ssize_t need = (n_frames - 1) * hop + win + lag_max
    if xv.shape[0] < need:
        raise ValueError(f"signal too short: need {need} samples, got {xv.shape[0]}")
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, n, s, lag
    cdef double acc, e0, el, den
    for i in range(n_frames):
        s = i * hop
        e0 = 0.0
        for n in range(win):
            e0 += xv[s + n] * xv[s + n]
        # lagged-window energy is slid one sample per lag, reset every frame
        el = 0.0
        for n in range(win):
            el += xv[s + lag_min + n] * xv[s + lag_min + n]
        for j in range(n_lags):
            lag = lag_min + j
            if j > 0:
                el += xv[s + lag + win - 1] * xv[s + lag + win - 1] - xv[s + lag - 1] * xv[s + lag - 1]
                if el < 0.0:
                    el = 0.0
            acc = 0.0
            for n in range(win):
                acc += xv[s + n] * xv[s + lag + n]
            den = sqrt(e0 * el)
            if den > 0.0:
                ov[i, j] = acc / den
    return out


def viterbi(local_cost, log_f0, double lam, double octave_cost, double octave_ratio):
    cdef double[:, ::1] lc = np.ascontiguousarray(local_cost, dtype=np.float64)
    cdef double[:, ::1] lf = np.ascontiguousarray(log_f0, dtype=np.float64)
    cdef Py_ssize_t n = lc.shape[0], c = lc.shape[1]
    path = np.zeros(n, dtype=np.int64)
    if n == 0:
        return path
    cdef long long[::1] pv = path
    cdef long long[:, ::1] back = np.zeros((n, c), dtype=np.int64)
    cdef double[::1] acc = np.empty(c)
    cdef double[::1] nxt = np.empty(c)
    cdef double jump = log(octave_ratio)
    cdef Py_ssize_t t, a, b, best_a
    cdef double diff, tr, tot, best
    for b in range(c):
        acc[b] = lc[0, b]
    for t in range(1, n):
        for b in range(c):
            best = INFINITY
            best_a = 0
            for a in range(c):
                diff = fabs(lf[t - 1, a] - lf[t, b])
                if diff != diff or diff == INFINITY:
                    tr = INFINITY
                else:
                    tr = lam * diff
                    if diff > jump:
                        tr += octave_cost
                tot = acc[a] + tr
                if tot < best:
                    best = tot
                    best_a = a
            back[t, b] = best_a
            nxt[b] = best + lc[t, b]
        for b in range(c):
            acc[b] = nxt[b]
    best = INFINITY
    best_a = 0
    for b in range(c):
        if acc[b] < best:
            best = acc[b]
            best_a = b
    pv[n - 1] = best_a
    for t in range(n - 1, 0, -1):
        pv[t - 1] = back[t, pv[t]]
    return path


def nearest_centroid(points, centroids):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] cen = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], dim = p.shape[1], k = cen.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n)
    cdef long long[::1] lv = labels
    cdef double[::1] dv = dists
    cdef Py_ssize_t i, j, d, best_j
    cdef double acc, diff, best
    for i in range(n):
        best = INFINITY
        best_j = 0
        for j in range(k):
            acc = 0.0
            for d in range(dim):
                diff = p[i, d] - cen[j, d]
                acc += diff * diff
                if acc >= best:
                    break
            if acc < best:
                best = acc
                best_j = j
        lv[i] = best_j
        dv[i] = best
    return labels, dists
