# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  See ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, fabs, isfinite, M_PI

cnp.import_array()

cdef double REL_EXIT = 1e-18


cdef inline void _small_sums(double beta, double t, int terms,
                             double* n_out, double* d_out) noexcept nogil:
    cdef double x = beta * beta / t
    cdef double n_acc = 0.0, d_acc = 0.0
    cdef double coef, e, odd, sign, nt, dt
    cdef int k
    for k in range(terms):
        coef = 2.0 * k * (k + 1)
        e = exp(-coef * x)
        odd = 2 * k + 1
        nt = e * ((odd * odd) * x - 1.0)
        sign = -1.0 if k % 2 else 1.0
        dt = (sign * odd * beta) * e
        if fabs(nt) <= REL_EXIT * fabs(n_acc) and fabs(dt) <= REL_EXIT * fabs(d_acc):
            break
        n_acc = n_acc + nt
        d_acc = d_acc + dt
    n_out[0] = n_acc
    d_out[0] = d_acc


cdef inline double _large_sums(double beta, double t, int terms,
                               double* f_out, double* q_out) noexcept nogil:
    cdef double a = t * (M_PI * M_PI / (2.0 * beta * beta))
    cdef double f_acc = 0.0, q_acc = 0.0
    cdef double sign, ft, qt, m
    cdef int j
    for j in range(terms):
        sign = -1.0 if j % 2 else 1.0
        ft = (sign * (2 * j + 1)) * exp(-(j * (j + 1.0)) * a)
        m = j + 1
        qt = (sign * (m * m)) * exp(-(m * m - 0.25) * a)
        if fabs(ft) <= REL_EXIT * fabs(f_acc) and fabs(qt) <= REL_EXIT * fabs(q_acc):
            break
        f_acc = f_acc + ft
        q_acc = q_acc + qt
    f_out[0] = f_acc
    q_out[0] = q_acc
    return a


def weight_w(double beta, t, int terms):
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double ti, x, s1, s2
    with nogil:
        for i in range(n):
            ti = tv[i]
            if ti <= beta * beta:
                x = beta * beta / ti
                _small_sums(beta, ti, terms, &s1, &s2)
                if isfinite(x):
                    ov[i] = s1 / s2
                else:
                    ov[i] = beta / ti - 1.0 / beta
            else:
                _large_sums(beta, ti, terms, &s1, &s2)
                ov[i] = (2.0 * M_PI / beta) * s2 / s1
    return out


def log_f0(double beta, t, int terms):
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double ti, s1, s2, a
    cdef double c_small = 0.5 * log(2.0 / M_PI)
    cdef double c_large = log(M_PI / (2.0 * beta * beta))
    with nogil:
        for i in range(n):
            ti = tv[i]
            if ti <= beta * beta:
                _small_sums(beta, ti, terms, &s1, &s2)
                ov[i] = c_small - 1.5 * log(ti) - beta * beta / (2.0 * ti) + log(s2)
            else:
                a = _large_sums(beta, ti, terms, &s1, &s2)
                ov[i] = c_large - 0.25 * a + log(s1)
    return out


def q_density(double beta, t, int terms):
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double ti, s1, s2, a
    cdef double c_small = sqrt(2.0 / M_PI)
    cdef double c_large = M_PI * M_PI / (beta * beta * beta)
    with nogil:
        for i in range(n):
            ti = tv[i]
            if ti <= beta * beta:
                _small_sums(beta, ti, terms, &s1, &s2)
                ov[i] = c_small * ti ** -1.5 * exp(-beta * beta / (2.0 * ti)) * s1
            else:
                a = _large_sums(beta, ti, terms, &s1, &s2)
                ov[i] = c_large * exp(-0.25 * a) * s2
    return out


def laplace_mean(times, double lam, double shift):
    """Neumaier-compensated mean of exp(-lam * (t - shift))."""
    cdef const double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], i
    cdef double s = 0.0, c = 0.0, x, tmp
    with nogil:
        for i in range(n):
            x = exp(-lam * (tv[i] - shift))
            tmp = s + x
            if fabs(s) >= fabs(x):
                c = c + ((s - tmp) + x)
            else:
                c = c + ((x - tmp) + s)
            s = tmp
    return (s + c) / n


def inverse_cdf(cdf, time_grid, rows, u):
    """Invert piecewise-linear CDF rows at uniforms ``u``."""
    cdef const double[:, ::1] cv = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef const double[::1] tg = np.ascontiguousarray(time_grid, dtype=np.float64)
    cdef const long long[::1] rv = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], nt = cv.shape[1], i, lo, hi, mid
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double ui, f0, f1
    cdef long long r
    with nogil:
        for i in range(n):
            r = rv[i]
            ui = uv[i]
            # first j with cdf[r, j] >= u
            lo = 0
            hi = nt
            while lo < hi:
                mid = (lo + hi) // 2
                if cv[r, mid] < ui:
                    lo = mid + 1
                else:
                    hi = mid
            if lo == 0:
                ov[i] = tg[0]
            else:
                f0 = cv[r, lo - 1]
                f1 = cv[r, lo]
                ov[i] = tg[lo - 1] + (ui - f0) / (f1 - f0) * (tg[lo] - tg[lo - 1])
    return out
