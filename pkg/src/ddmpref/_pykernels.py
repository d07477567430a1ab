"""Pure NumPy implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` term for term: same dispatch rule, same summation
order and the same per-element early exit, so the two backends agree to a
few ulp (they differ only in the libm used for ``exp``).
"""

import math

import numpy as np

REL_EXIT = 1e-18
PI = math.pi


def _series_loop(n, terms, term_fn):
    """Sum two series element-wise with per-element early exit.

    ``term_fn(k, idx)`` returns the pair of k-th terms for the still-active
    elements ``idx``.  An element stops once both terms fall below
    ``REL_EXIT`` times their running partial sums.
    """
    acc1 = np.zeros(n)
    acc2 = np.zeros(n)
    idx = np.arange(n)
    for k in range(terms):
        if idx.size == 0:
            break
        t1, t2 = term_fn(k, idx)
        p1 = acc1[idx]
        p2 = acc2[idx]
        done = (np.abs(t1) <= REL_EXIT * np.abs(p1)) & (np.abs(t2) <= REL_EXIT * np.abs(p2))
        keep = ~done
        idx = idx[keep]
        acc1[idx] = p1[keep] + t1[keep]
        acc2[idx] = p2[keep] + t2[keep]
    return acc1, acc2


def _small_sums(beta, t, terms):
    # Factored small-time sums: N' and D' with exp(-beta^2/(2t)) removed.
    x = beta * beta / t

    def term(k, idx):
        xi = x[idx]
        coef = 2.0 * k * (k + 1)
        e = np.exp(-coef * xi)
        odd = 2 * k + 1
        nt = e * ((odd * odd) * xi - 1.0)
        sign = -1.0 if k % 2 else 1.0
        dt = (sign * odd * beta) * e
        return nt, dt

    return _series_loop(t.size, terms, term)


def _large_sums(beta, t, terms):
    # Factored large-time sums: F' (f0, m>=0) and Q' (q, m>=1),
    # both with exp(-pi^2 t / (8 beta^2)) removed.
    a = t * (PI * PI / (2.0 * beta * beta))

    def term(j, idx):
        ai = a[idx]
        sign = -1.0 if j % 2 else 1.0
        ft = (sign * (2 * j + 1)) * np.exp(-(j * (j + 1.0)) * ai)
        m = j + 1
        qt = (sign * (m * m)) * np.exp(-(m * m - 0.25) * ai)
        return ft, qt

    f, q = _series_loop(t.size, terms, term)
    return f, q, a


def weight_w(beta, t, terms):
    t = np.ascontiguousarray(t, dtype=np.float64)
    out = np.empty_like(t)
    small = t <= beta * beta
    ts = t[small]
    if ts.size:
        n, d = _small_sums(beta, ts, terms)
        x = beta * beta / ts
        w = n / d
        over = ~np.isfinite(x)
        if over.any():
            w[over] = beta / ts[over] - 1.0 / beta
        out[small] = w
    tl = t[~small]
    if tl.size:
        f, q, _ = _large_sums(beta, tl, terms)
        out[~small] = (2.0 * PI / beta) * q / f
    return out


def log_f0(beta, t, terms):
    t = np.ascontiguousarray(t, dtype=np.float64)
    out = np.empty_like(t)
    small = t <= beta * beta
    ts = t[small]
    if ts.size:
        _, d = _small_sums(beta, ts, terms)
        out[small] = (0.5 * math.log(2.0 / PI) - 1.5 * np.log(ts)
                      - beta * beta / (2.0 * ts) + np.log(d))
    tl = t[~small]
    if tl.size:
        f, _, a = _large_sums(beta, tl, terms)
        out[~small] = math.log(PI / (2.0 * beta * beta)) - 0.25 * a + np.log(f)
    return out


def q_density(beta, t, terms):
    t = np.ascontiguousarray(t, dtype=np.float64)
    out = np.empty_like(t)
    small = t <= beta * beta
    ts = t[small]
    if ts.size:
        n, _ = _small_sums(beta, ts, terms)
        out[small] = (math.sqrt(2.0 / PI) * ts ** -1.5
                      * np.exp(-beta * beta / (2.0 * ts)) * n)
    tl = t[~small]
    if tl.size:
        _, q, a = _large_sums(beta, tl, terms)
        out[~small] = (PI * PI / beta ** 3) * np.exp(-0.25 * a) * q
    return out


def laplace_mean(times, lam, shift):
    """Correctly rounded mean of exp(-lam * (t - shift))."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    vals = np.exp(-lam * (times - shift))
    return math.fsum(vals.tolist()) / times.size


def inverse_cdf(cdf, time_grid, rows, u):
    """Invert piecewise-linear CDF rows at uniforms ``u``."""
    cdf = np.ascontiguousarray(cdf, dtype=np.float64)
    time_grid = np.ascontiguousarray(time_grid, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.int64)
    u = np.asarray(u, dtype=np.float64)
    out = np.empty(u.size)
    order = np.argsort(rows, kind="stable")
    sorted_rows = rows[order]
    starts = np.flatnonzero(np.r_[True, sorted_rows[1:] != sorted_rows[:-1]])
    ends = np.r_[starts[1:], sorted_rows.size]
    for s, e in zip(starts, ends):
        sel = order[s:e]
        row = cdf[sorted_rows[s]]
        uu = u[sel]
        j = np.searchsorted(row, uu, side="left")
        res = np.full(uu.size, time_grid[0])
        ok = j > 0
        jj = j[ok]
        f0 = row[jj - 1]
        f1 = row[jj]
        t0 = time_grid[jj - 1]
        t1 = time_grid[jj]
        res[ok] = t0 + (uu[ok] - f0) / (f1 - f0) * (t1 - t0)
        out[sel] = res
    return out
