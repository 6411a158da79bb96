# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; mirrors ``_kernels_py`` function by function."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, log, fabs

cnp.import_array()


cdef inline Py_ssize_t _search(const double[::1] cum, Py_ssize_t n, double target) noexcept nogil:
    # first index with cum[i] > target, clamped to n - 1
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] > target:
            hi = mid
        else:
            lo = mid + 1
    if lo >= n:
        lo = n - 1
    return lo


def first_above(row, double target):
    cdef const double[::1] c = np.ascontiguousarray(row, dtype=np.float64)
    return int(_search(c, c.shape[0], target))


def sample_index(cum, double u):
    cdef const double[::1] c = np.ascontiguousarray(cum, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    return int(_search(c, n, u * c[n - 1]))


def bilinear_chunk(const double[:, ::1] M, const double[::1] b, const double[::1] c,
                   double[::1] x, double[::1] y, double[::1] x_sum, double[::1] y_sum,
                   double[::1] x_prev, double[::1] y_prev,
                   const double[::1] x_center, const double[::1] y_center,
                   double eta_x, double eta_y, double rho_x, double rho_y,
                   xi_x, xi_y, xi_b, xi_c, Py_ssize_t k):
    cdef Py_ssize_t m = M.shape[0], n = M.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double rex = rho_x * eta_x, rey = rho_y * eta_y
    cdef double acc, sq, max_sq = 0.0, gxn = 0.0, gyn = 0.0
    cdef const double[:, :, ::1] XX
    cdef const double[:, :, ::1] XY
    cdef const double[:, ::1] XB
    cdef const double[:, ::1] XC
    cdef bint hx = xi_x is not None, hy = xi_y is not None
    cdef bint hb = xi_b is not None, hc = xi_c is not None
    if hx:
        XX = np.ascontiguousarray(xi_x, dtype=np.float64)
    if hy:
        XY = np.ascontiguousarray(xi_y, dtype=np.float64)
    if hb:
        XB = np.ascontiguousarray(xi_b, dtype=np.float64)
    if hc:
        XC = np.ascontiguousarray(xi_c, dtype=np.float64)
    cdef double[::1] gx = np.empty(m)
    cdef double[::1] gy = np.empty(n)
    with nogil:
        for t in range(k):
            sq = 0.0
            for i in range(m):
                x_prev[i] = x[i]
                x_sum[i] += x[i]
                sq += x[i] * x[i]
            for j in range(n):
                y_prev[j] = y[j]
                y_sum[j] += y[j]
                sq += y[j] * y[j]
            if sq > max_sq:
                max_sq = sq
            for i in range(m):
                acc = 0.0
                if hx:
                    for j in range(n):
                        acc += (M[i, j] + XX[t, i, j]) * y_prev[j]
                else:
                    for j in range(n):
                        acc += M[i, j] * y_prev[j]
                acc += b[i]
                if hb:
                    acc += XB[t, i]
                gx[i] = acc
            for j in range(n):
                acc = 0.0
                if hy:
                    for i in range(m):
                        acc += (M[i, j] + XY[t, i, j]) * x_prev[i]
                else:
                    for i in range(m):
                        acc += M[i, j] * x_prev[i]
                acc -= c[j]
                if hc:
                    acc -= XC[t, j]
                gy[j] = acc
            gxn = 0.0
            for i in range(m):
                x[i] = (x_prev[i] - eta_x * gx[i]) / (1.0 + rex) + (rex * x_center[i]) / (1.0 + rex)
                gxn += gx[i] * gx[i]
            gyn = 0.0
            for j in range(n):
                y[j] = (y_prev[j] + eta_y * gy[j]) / (1.0 + rey) + (rey * y_center[j]) / (1.0 + rey)
                gyn += gy[j] * gy[j]
    return sqrt(gxn), sqrt(gyn), max_sq


cdef double _clip_level(double[::1] z, double[::1] buf, Py_ssize_t S, double lam) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double key, csum = 0.0, tau, best = 0.0
    for i in range(S):
        buf[i] = fabs(z[i])
    # insertion sort, descending; S is small
    for i in range(1, S):
        key = buf[i]
        j = i - 1
        while j >= 0 and buf[j] < key:
            buf[j + 1] = buf[j]
            j -= 1
        buf[j + 1] = key
    if buf[0] == 0.0:
        return 0.0
    for i in range(S):
        csum += buf[i]
        tau = csum / (2.0 * lam + (i + 1))
        if buf[i] > tau:
            best = tau
    return best


def inf_sq_clip_level(z, double lam):
    cdef double[::1] zz = np.ascontiguousarray(z, dtype=np.float64).copy()
    cdef double[::1] buf = np.empty(zz.shape[0])
    return _clip_level(zz, buf, zz.shape[0], lam)


def mdp_chunk(const double[::1] r, const double[:, ::1] cdf, const cnp.int64_t[::1] state_of,
              double[::1] v, double[::1] logmu, double[::1] v_sum, double[::1] mu_sum,
              double[::1] v_prev, double[::1] mu_prev, double eta_v, double eta_mu, double rho_v, const double[:, ::1] U, Py_ssize_t k):
    cdef Py_ssize_t SA = r.shape[0], S = v.shape[0]
    cdef Py_ssize_t t, i, j, s, s_next, idx
    cdef double lam = eta_v * rho_v, tau, top, tot, g
    cdef double gv_sq = 0.0, gmu_inf = 0.0, vmax = 0.0, a
    cdef double[::1] mu = np.empty(SA)
    cdef double[::1] cum = np.empty(SA)
    cdef double[::1] z = np.empty(S)
    cdef double[::1] buf = np.empty(S)
    with nogil:
        for t in range(k):
            tot = 0.0
            for i in range(SA):
                mu[i] = exp(logmu[i])
                mu_sum[i] += mu[i]
                mu_prev[i] = mu[i]
                tot += mu[i]
                cum[i] = tot
            for j in range(S):
                v_sum[j] += v[j]
                v_prev[j] = v[j]
                a = fabs(v[j])
                if a > vmax:
                    vmax = a
            i = _search(cum, SA, U[t, 0] * cum[SA - 1])
            s = state_of[i]
            s_next = _search(cdf[i], S, U[t, 1])
            for j in range(S):
                z[j] = v[j]
            # z = v - eta_v * (e_{s'} - e_s)
            if s_next != s:
                z[s_next] = z[s_next] - eta_v * 1.0
                z[s] = z[s] - eta_v * -1.0
            if lam > 0:
                tau = _clip_level(z, buf, S, lam)
                for j in range(S):
                    if z[j] > tau:
                        z[j] = tau
                    elif z[j] < -tau:
                        z[j] = -tau
            gv_sq = 0.0 if s_next == s else 2.0
            gmu_inf = 0.0
            top = -1e308
            for i in range(SA):
                idx = _search(cdf[i], S, U[t, 2 + i])
                g = r[i] + v[idx] - v[state_of[i]]
                if fabs(g) > gmu_inf:
                    gmu_inf = fabs(g)
                logmu[i] += eta_mu * g
                if logmu[i] > top:
                    top = logmu[i]
            tot = 0.0
            for i in range(SA):
                tot += exp(logmu[i] - top)
            tot = top + log(tot)
            for i in range(SA):
                logmu[i] -= tot
            for j in range(S):
                v[j] = z[j]
    return gv_sq, gmu_inf, vmax


def simulate_chain(const double[:, ::1] cdf, const double[::1] rewards, Py_ssize_t s0,
                   const double[::1] U):
    cdef Py_ssize_t S = cdf.shape[0], n = U.shape[0], t, s = s0
    counts_arr = np.zeros(S, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double total = 0.0
    with nogil:
        for t in range(n):
            counts[s] += 1
            total += rewards[s]
            s = _search(cdf[s], S, U[t])
    return counts_arr, total
