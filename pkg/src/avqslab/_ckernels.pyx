# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Same signatures and results as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log2, INFINITY

cnp.import_array()


def divergence_gap_scan(const double[:, ::1] p_pts, const double[::1] p_negent,
                        const double[::1] p_ent,
                        const double[:, ::1] q_log, const double[::1] q_ent,
                        const Py_ssize_t[::1] cell_start, const double[:, ::1] cell_logmax,
                        const double[::1] cell_hmin, const double[::1] cell_hmax,
                        double eta, double threshold):
    """Count pairs with entropy gap >= eta and divergence below threshold.

    Cells whose entropy range cannot reach the gap, or whose divergence lower
    bound clears the threshold, are skipped without enumeration.
    """
    cdef Py_ssize_t n = p_pts.shape[0], d = p_pts.shape[1], nc = cell_hmin.shape[0]
    cdef Py_ssize_t a, c, j, i
    cdef long long violations = 0, evaluated = 0
    cdef double best = INFINITY, hp, lb, cross, dv, pi, lq
    cdef bint dead
    for a in range(n):
        hp = p_ent[a]
        for c in range(nc):
            if cell_hmin[c] > hp - eta and cell_hmax[c] < hp + eta:
                continue
            lb = p_negent[a]
            dead = False
            for i in range(d):
                pi = p_pts[a, i]
                if pi > 0:
                    lq = cell_logmax[c, i]
                    if lq == -INFINITY:
                        dead = True
                        break
                    lb -= pi * lq
            if dead or lb > threshold + 1e-12:
                continue
            for j in range(cell_start[c], cell_start[c + 1]):
                if hp - eta < q_ent[j] < hp + eta:
                    continue
                cross = 0.0
                dead = False
                for i in range(d):
                    pi = p_pts[a, i]
                    if pi > 0:
                        lq = q_log[j, i]
                        if lq == -INFINITY:
                            dead = True
                            break
                        cross -= pi * lq
                if dead:
                    continue
                dv = p_negent[a] + cross
                evaluated += 1
                if dv < best:
                    best = dv
                if dv < threshold:
                    violations += 1
    return violations, best, evaluated


def orbit_mean(const double[::1] table, Py_ssize_t n_symbols, Py_ssize_t length,
               const Py_ssize_t[:, ::1] perms):
    """out[s] = mean over rows k of table[(s[perms[k, 0]], ..., s[perms[k, l-1]])]."""
    cdef Py_ssize_t total = table.shape[0], n_perm = perms.shape[0]
    cdef Py_ssize_t s, k, i, idx, rem
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(total)
    cdef Py_ssize_t[::1] digits = np.zeros(length, dtype=np.intp)
    cdef Py_ssize_t[::1] weight = np.zeros(length, dtype=np.intp)
    cdef double acc
    weight[length - 1] = 1
    for i in range(length - 2, -1, -1):
        weight[i] = weight[i + 1] * n_symbols
    for s in range(total):
        rem = s
        for i in range(length - 1, -1, -1):
            digits[i] = rem % n_symbols
            rem = rem // n_symbols
        acc = 0.0
        for k in range(n_perm):
            idx = 0
            for i in range(length):
                idx += digits[perms[k, i]] * weight[i]
            acc += table[idx]
        out[s] = acc / n_perm
    return out


def orbit_values(const double[::1] table, Py_ssize_t n_symbols, Py_ssize_t length,
                 const Py_ssize_t[:, ::1] perms):
    """out[k, s] = table[(s[perms[k, 0]], ..., s[perms[k, l-1]])]."""
    cdef Py_ssize_t total = table.shape[0], n_perm = perms.shape[0]
    cdef Py_ssize_t s, k, i, idx, rem
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n_perm, total))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t[::1] digits = np.zeros(length, dtype=np.intp)
    cdef Py_ssize_t[::1] weight = np.zeros(length, dtype=np.intp)
    weight[length - 1] = 1
    for i in range(length - 2, -1, -1):
        weight[i] = weight[i + 1] * n_symbols
    for s in range(total):
        rem = s
        for i in range(length - 1, -1, -1):
            digits[i] = rem % n_symbols
            rem = rem // n_symbols
        for k in range(n_perm):
            idx = 0
            for i in range(length):
                idx += digits[perms[k, i]] * weight[i]
            ov[k, s] = table[idx]
    return out
