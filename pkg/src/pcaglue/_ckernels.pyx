# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_pykernels`` for the contracts."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, cos, floor, ceil, fabs, M_PI

cnp.import_array()


cdef inline Py_ssize_t _clip(Py_ssize_t v, Py_ssize_t hi) noexcept nogil:
    if v < 0:
        return 0
    if v > hi:
        return hi
    return v


cdef inline Py_ssize_t _mirror(Py_ssize_t v, Py_ssize_t hi) noexcept nogil:
    if v < 0:
        return -v
    if v > hi:
        return 2 * hi - v
    return v


def data_table(const double[::1] fixed_col, const double[::1, :] moving, Py_ssize_t j,
               const long[::1] state_a, const long[::1] state_t, Py_ssize_t half):
    cdef Py_ssize_t m = moving.shape[0]
    cdef Py_ssize_t l = moving.shape[1]
    cdef Py_ssize_t S = state_a.shape[0]
    cdef Py_ssize_t i, s, k, col, a
    cdef double acc, d
    cdef double inv = 1.0 / (2 * half + 1)
    out_arr = np.empty((m, S), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for s in range(S):
            col = _clip(j + state_t[s], l - 1)
            a = state_a[s]
            for i in range(m):
                acc = 0.0
                for k in range(-half, half + 1):
                    d = fixed_col[_mirror(i + k, m - 1)] - moving[_mirror(i + k + a, m - 1), col]
                    acc = acc + d * d
                out[i, s] = acc * inv
    return out_arr


def dp_solve(const double[:, ::1] D, const double[:, ::1] trans):
    cdef Py_ssize_t m = D.shape[0]
    cdef Py_ssize_t S = D.shape[1]
    cdef Py_ssize_t i, s, sp, arg
    cdef double best, v
    cum_arr = np.array(D[0], dtype=np.float64)
    nxt_arr = np.empty(S, dtype=np.float64)
    back_arr = np.zeros((m, S), dtype=np.int64)
    path_arr = np.empty(m, dtype=np.int64)
    cdef double[::1] cum = cum_arr
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] tmp
    cdef long[:, ::1] back = back_arr
    cdef long[::1] path = path_arr
    with nogil:
        for i in range(1, m):
            for s in range(S):
                best = cum[0] + trans[0, s]
                arg = 0
                for sp in range(1, S):
                    v = cum[sp] + trans[sp, s]
                    if v < best:
                        best = v
                        arg = sp
                nxt[s] = best + D[i, s]
                back[i, s] = arg
            tmp = cum
            cum = nxt
            nxt = tmp
        arg = 0
        best = cum[0]
        for s in range(1, S):
            if cum[s] < best:
                best = cum[s]
                arg = s
        path[m - 1] = arg
        for i in range(m - 1, 0, -1):
            arg = back[i, arg]
            path[i - 1] = arg
    return path_arr, float(best)


def render(const double[::1] z, const double[::1] x, const double[::1] amp,
           Py_ssize_t m, Py_ssize_t l, double freq, double sigma_a, double sigma_l,
           double half_a, double half_l):
    out_arr = np.zeros((m, l), dtype=np.float64, order="F")
    cdef double[::1, :] out = out_arr
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t q, i, jj, i0, i1, j0, j1
    cdef double dz, dx, wa, ca = 1.0 / (2 * sigma_a * sigma_a), cl = 1.0 / (2 * sigma_l * sigma_l)
    cdef double w = 2 * M_PI * freq
    cdef double wl[64]
    with nogil:
        for q in range(n):
            i0 = <Py_ssize_t>ceil(z[q] - half_a)
            i1 = <Py_ssize_t>floor(z[q] + half_a)
            j0 = <Py_ssize_t>ceil(x[q] - half_l)
            j1 = <Py_ssize_t>floor(x[q] + half_l)
            if i0 < 0:
                i0 = 0
            if i1 > m - 1:
                i1 = m - 1
            if j0 < 0:
                j0 = 0
            if j1 > l - 1:
                j1 = l - 1
            if i0 > i1 or j0 > j1 or j1 - j0 >= 64:
                continue
            for jj in range(j0, j1 + 1):
                dx = jj - x[q]
                wl[jj - j0] = exp(-dx * dx * cl)
            for i in range(i0, i1 + 1):
                dz = i - z[q]
                wa = amp[q] * exp(-dz * dz * ca) * cos(w * dz)
                for jj in range(j0, j1 + 1):
                    out[i, jj] += wa * wl[jj - j0]
    return out_arr
