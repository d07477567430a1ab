"""Synthetic DDM data via inverse-CDF sampling on a tabulated conditional CDF.

The exit time under drift ``v`` has density
``f(t | v, b) = f0(t; b) exp(-v^2 t / 2) cosh(b v)``.  ``build_cache``
tabulates its CDF on a drift grid times a fixed time grid; sampling snaps
the drift to the nearest grid row and linearly interpolates in time.
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr, ndtri

from ._backend import kernels
from .errors import ConfigurationError
from .observations import Observations
from .series import DEFAULT_TERMS, _check_beta, _log_cosh, log_f0_density

# RNG stream ids
STREAM_DRIFT = 0
STREAM_CONTEXT = 1
STREAM_CHOICE = 2
STREAM_TIME = 3
STREAM_BOUNDARY = 4
STREAM_SUBSAMPLE = 5

DEFAULT_T_MAX = 20.0
DEFAULT_N_TIME = 998
DEFAULT_TAIL_TOL = 1e-6
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def make_rng(seed, rep=0, stream=0, *context):
    """Counter-based generator keyed by ``(seed, rep, stream, *context)``."""
    key = tuple(int(k) for k in (rep, stream) + tuple(context))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def time_grid(t_max=DEFAULT_T_MAX, n_points=DEFAULT_N_TIME, fine_lo=1e-4, fine_hi=1e-2,
              fine_step=5e-5):
    """Uniform spacing on ``[fine_lo, fine_hi]`` then geometric out to ``t_max``."""
    n_fine = int(round((fine_hi - fine_lo) / fine_step)) + 1
    if not t_max > fine_hi:
        raise ConfigurationError(f"t_max must exceed {fine_hi}, got {t_max}")
    if n_points < n_fine + 2:
        raise ConfigurationError(f"time grid needs at least {n_fine + 2} points")
    fine = fine_lo + fine_step * np.arange(n_fine)
    fine[-1] = fine_hi
    coarse = np.geomspace(fine_hi, t_max, n_points - n_fine + 1)[1:]
    coarse[-1] = t_max
    return np.concatenate([fine, coarse])


def tail_mass_bound(boundary, v, t_max):
    """Upper bound on ``P(T > t_max | v)`` from the leading large-time term."""
    b = _check_beta(boundary)
    v = np.asarray(v, dtype=np.float64)
    kappa = math.pi ** 2 / (8 * b * b) + 0.5 * v * v
    log_bound = (math.log(math.pi / (2 * b * b)) + _log_cosh(b * v)
                 - kappa * t_max - np.log(kappa))
    return np.exp(log_bound)


@dataclass(frozen=True, eq=False)
class FptGridCache:
    """Tabulated conditional CDFs; immutable and shareable across threads."""

    boundary: float
    drift_grid: np.ndarray
    time_grid: np.ndarray
    cdf_table: np.ndarray
    t_max: float
    row_mass: np.ndarray | None = None

    def __post_init__(self):
        for name in ("drift_grid", "time_grid", "cdf_table"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def v_lo(self):
        return float(self.drift_grid[0])

    @property
    def v_hi(self):
        return float(self.drift_grid[-1])

    @property
    def v_max(self):
        return max(abs(self.v_lo), abs(self.v_hi))

    def covers(self, v):
        v = np.asarray(v)
        return bool(np.all((v >= self.v_lo) & (v <= self.v_hi)))

    def snap(self, v):
        """Nearest drift-grid row; exact midpoints go to the row nearer zero."""
        v = np.asarray(v, dtype=np.float64)
        grid = self.drift_grid
        hi = np.clip(np.searchsorted(grid, v, side="left"), 1, grid.size - 1)
        lo = hi - 1
        d_lo = v - grid[lo]
        d_hi = grid[hi] - v
        pick_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (np.abs(grid[hi]) < np.abs(grid[lo])))
        return np.where(pick_hi, hi, lo)

    def save(self, path):
        """Flat little-endian binary: header, drift grid, time grid, CDF rows."""
        n_v, n_t = self.cdf_table.shape
        with open(path, "wb") as fh:
            fh.write(b"DDMFPT01")
            fh.write(struct.pack("<dqqdd", self.boundary, n_v, n_t, self.v_max, self.t_max))
            for arr in (self.drift_grid, self.time_grid, self.cdf_table):
                fh.write(arr.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(8) != b"DDMFPT01":
                raise ConfigurationError(f"{path} is not a cache file")
            header = fh.read(40)
            if len(header) != 40:
                raise ConfigurationError(f"{path} is truncated")
            boundary, n_v, n_t, _v_max, t_max = struct.unpack("<dqqdd", header)
            body = fh.read()
        if n_v < 2 or n_t < 2 or len(body) != 8 * (n_v + n_t + n_v * n_t):
            raise ConfigurationError(f"{path} is truncated or corrupt")
        flat = np.frombuffer(body, dtype="<f8")
        drift, times, cdf = flat[:n_v], flat[n_v:n_v + n_t], flat[n_v + n_t:]
        return cls(boundary, drift.copy(), times.copy(), cdf.reshape(n_v, n_t).copy(), t_max)


def _row_masses(boundary, drift_grid, tg, terms, quadrature):
    """Per-cell probability mass of ``f(t | v)`` for every drift row."""
    if quadrature == "gauss":
        mid = 0.5 * (tg[1:] + tg[:-1])
        half = 0.5 * (tg[1:] - tg[:-1])
        pts = (mid[:, None] + half[:, None] * _GL_NODES[None, :])
        logf0 = log_f0_density(boundary, pts.ravel(), terms).reshape(pts.shape)
        weights = half[:, None] * _GL_WEIGHTS[None, :]
    elif quadrature == "trapezoid":
        pts = tg
        logf0 = log_f0_density(boundary, tg, terms)
        weights = None
    else:
        raise ConfigurationError(f"unknown quadrature rule {quadrature!r}")

    out = np.empty((drift_grid.size, tg.size - 1))
    for i, v in enumerate(drift_grid):
        logf = logf0 + float(_log_cosh(boundary * v)) - 0.5 * v * v * pts
        f = np.exp(logf)
        if weights is None:
            out[i] = 0.5 * (f[1:] + f[:-1]) * np.diff(tg)
        else:
            out[i] = (f * weights).sum(axis=1)
    return out


def build_cache(boundary, v_range, n_v, t_max=DEFAULT_T_MAX, terms=DEFAULT_TERMS,
                n_time=DEFAULT_N_TIME, tail_tol=DEFAULT_TAIL_TOL, quadrature="gauss"):
    """Tabulate conditional exit-time CDFs.

    Parameters
    ----------
    boundary : float
    v_range : (float, float)
        Drift interval covered by the uniform ``n_v``-point grid.
    n_v : int
        Number of drift rows (at least 2).
    t_max : float
        Truncation time; each row is renormalized so its CDF ends at exactly 1.
    tail_tol : float
        Largest admissible analytic bound on the truncated tail mass.
    quadrature : {"gauss", "trapezoid"}
        Rule for the per-cell masses.  4-point Gauss-Legendre is the default.

    Raises
    ------
    ConfigurationError
        If the tail bound exceeds ``tail_tol`` or arguments are invalid.
    """
    b = _check_beta(boundary)
    n_v = int(n_v)
    if n_v < 2:
        raise ConfigurationError(f"n_v must be at least 2, got {n_v}")
    lo, hi = (float(x) for x in v_range)
    if not (lo < hi and math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigurationError(f"invalid drift range ({lo}, {hi})")
    if not t_max > 0:
        raise ConfigurationError("t_max must be positive")
    drift = np.linspace(lo, hi, n_v)
    # The tail bound is largest at the drift of smallest magnitude.
    v_small = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
    tail = float(tail_mass_bound(b, v_small, t_max))
    if tail > tail_tol:
        raise ConfigurationError(
            f"truncated tail mass bound {tail:.3g} exceeds {tail_tol:g} "
            f"(boundary {b:g}, t_max {t_max:g}); increase t_max")
    tg = time_grid(t_max, n_time)
    masses = _row_masses(b, drift, tg, terms, quadrature)
    cdf = np.zeros((n_v, tg.size))
    np.cumsum(masses, axis=1, out=cdf[:, 1:])
    total = cdf[:, -1].copy()
    cdf /= total[:, None]
    cdf[:, -1] = 1.0
    return FptGridCache(b, drift, tg, cdf, float(t_max), row_mass=total)


def sample_fpt(cache, v, rng, size=None):
    """Inverse-CDF exit-time draws for drift(s) ``v``.

    ``v`` may be a scalar (with optional ``size``) or an array, in which case
    one time is drawn per entry.
    """
    v_arr = np.asarray(v, dtype=np.float64)
    if v_arr.ndim == 0 and size is not None:
        v_arr = np.full(size, float(v_arr))
    flat = np.atleast_1d(v_arr).ravel()
    if not cache.covers(flat):
        raise ConfigurationError(
            f"drift outside cache range [{cache.v_lo:g}, {cache.v_hi:g}]; rebuild the cache")
    u = rng.random(flat.size)
    rows = cache.snap(flat)
    out = kernels.inverse_cdf(cache.cdf_table, cache.time_grid, rows, u)
    if v_arr.ndim == 0:
        return float(out[0])
    return out.reshape(v_arr.shape)


def sample_choice(v, boundary, rng, size=None):
    """Choices ``+1`` with probability ``sigma(2 b v)``."""
    b = _check_beta(boundary)
    v_arr = np.asarray(v, dtype=np.float64)
    if v_arr.ndim == 0 and size is not None:
        v_arr = np.full(size, float(v_arr))
    u = rng.random(v_arr.shape)
    z = np.where(u < expit(2.0 * b * v_arr), 1, -1).astype(np.int8)
    return int(z) if z.ndim == 0 else z


_BETA_SD = math.sqrt(2 * 5 / ((2 + 5) ** 2 * (2 + 5 + 1)))
_BETA_MEAN = 2.0 / 7.0
PRIOR_FAMILIES = ("uniform", "beta_shifted", "gaussian_truncated", "laplace_truncated",
                  "point_mass")
FAMILY_ALIASES = {"beta": "beta_shifted", "gaussian": "gaussian_truncated",
                  "laplace": "laplace_truncated", "point": "point_mass"}


def canonical_family(name):
    name = FAMILY_ALIASES.get(name, name)
    if name not in PRIOR_FAMILIES:
        raise ConfigurationError(f"unknown prior family {name!r}")
    return name


@dataclass(frozen=True)
class PriorSpec:
    """Scalar prior parameterized by its mean and standard deviation ``scale``.

    * ``uniform``: ``mean +/- sqrt(3) scale``.
    * ``beta_shifted``: ``mean + scale * (B - 2/7) / sd(B)`` with ``B ~ Beta(2, 5)``.
    * ``gaussian_truncated``: ``N(mean, scale^2)`` truncated to ``+/- truncation * scale``.
    * ``laplace_truncated``: Laplace with standard deviation ``scale`` (rate
      ``sqrt(2) / scale``), truncated likewise.
    * ``point_mass``: the constant ``mean``.

    Symmetric truncation keeps the mean of the two truncated families exact.
    """

    family: str
    mean: float
    scale: float = 0.0
    truncation: float = 6.0

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        if self.family != "point_mass" and not self.scale > 0:
            raise ConfigurationError(f"{self.family} prior needs a positive scale")
        if not self.truncation > 0:
            raise ConfigurationError("truncation must be positive")

    @classmethod
    def uniform_interval(cls, lo, hi):
        return cls("uniform", 0.5 * (lo + hi), (hi - lo) / (2 * math.sqrt(3)))

    @classmethod
    def beta_standard(cls, mean):
        """``mean - 2/7 + Beta(2, 5)``."""
        return cls("beta_shifted", mean, _BETA_SD)

    def support(self):
        m, s = self.mean, self.scale
        if self.family == "uniform":
            return (m - math.sqrt(3) * s, m + math.sqrt(3) * s)
        if self.family == "beta_shifted":
            return (m - s * _BETA_MEAN / _BETA_SD, m + s * (1 - _BETA_MEAN) / _BETA_SD)
        if self.family == "point_mass":
            return (m, m)
        return (m - self.truncation * s, m + self.truncation * s)

    def sample(self, rng, size):
        m, s = self.mean, self.scale
        if self.family == "point_mass":
            return np.full(size, float(m))
        if self.family == "uniform":
            lo, hi = self.support()
            return lo + (hi - lo) * rng.random(size)
        if self.family == "beta_shifted":
            return m + s * (rng.beta(2.0, 5.0, size) - _BETA_MEAN) / _BETA_SD
        c = self.truncation
        u = rng.random(size)
        if self.family == "gaussian_truncated":
            lo = ndtr(-c)
            return m + s * ndtri(lo + (1.0 - 2.0 * lo) * u)
        # Laplace with unit variance: scale parameter 1/sqrt(2)
        beta = 1.0 / math.sqrt(2.0)
        lo = 0.5 * math.exp(-c / beta)
        p = lo + (1.0 - 2.0 * lo) * u
        x = np.where(p < 0.5, beta * np.log(2.0 * p), -beta * np.log(2.0 * (1.0 - p)))
        return m + s * x


def tabular_prior(family, mean=0.25):
    """Drift priors for the tabular experiments, all with the given mean.

    Uniform is ``U[mean - 0.5, mean + 0.5]``; the beta family is
    ``mean - 2/7 + Beta(2, 5)``; Gaussian and Laplace use standard deviation
    0.25; the point mass sits at ``mean``.
    """
    family = canonical_family(family)
    if family == "uniform":
        return PriorSpec.uniform_interval(mean - 0.5, mean + 0.5)
    if family == "beta_shifted":
        return PriorSpec.beta_standard(mean)
    if family == "point_mass":
        return PriorSpec("point_mass", mean)
    return PriorSpec(family, mean, 0.25)


@dataclass(frozen=True)
class LinearScenario:
    """Linear preference model ``v = psi . theta_i`` with ``psi ~ U[-1, 1]^d``."""

    theta_star: tuple = (0.25, -0.15, 0.10, -0.30)
    sigma_theta: float = 0.5
    family: str = "gaussian_truncated"
    boundary: float = 1.25
    ndt: float = 0.0

    def __post_init__(self):
        theta = tuple(float(x) for x in self.theta_star)
        if not theta:
            raise ConfigurationError("theta_star must have at least one coordinate")
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "family", canonical_family(self.family))
        _check_beta(self.boundary)
        if self.ndt < 0:
            raise ConfigurationError("ndt must be nonnegative")
        if self.family != "point_mass" and not self.sigma_theta > 0:
            raise ConfigurationError("sigma_theta must be positive")

    @property
    def dim(self):
        return len(self.theta_star)

    @property
    def v_max(self):
        s = 6.0 * self.sigma_theta
        return sum(max(abs(t - s), abs(t + s)) for t in self.theta_star)

    def priors(self):
        if self.family == "beta_shifted":
            return [PriorSpec("beta_shifted", t, self.sigma_theta) for t in self.theta_star]
        scale = 0.0 if self.family == "point_mass" else self.sigma_theta
        return [PriorSpec(self.family, t, scale) for t in self.theta_star]


class FptSampler:
    """Cache holder for one boundary implementing the rebuild protocol.

    Rebuilt caches are memoized by their drift half-width, so a given set of
    drifts always maps to the same table whatever order replications run in.
    """

    def __init__(self, boundary, v_range, n_v, t_max=DEFAULT_T_MAX, terms=DEFAULT_TERMS,
                 **cache_kwargs):
        self.boundary = _check_beta(boundary)
        self.v_range = (float(v_range[0]), float(v_range[1]))
        self.n_v = int(n_v)
        self.t_max = float(t_max)
        self.terms = terms
        self.cache_kwargs = cache_kwargs
        self._base = None
        self._rebuilt = {}
        self._lock = threading.Lock()
        self.rebuilds = 0

    def _build(self, v_range):
        return build_cache(self.boundary, v_range, self.n_v, self.t_max, self.terms,
                           **self.cache_kwargs)

    @property
    def base(self):
        with self._lock:
            if self._base is None:
                self._base = self._build(self.v_range)
            return self._base

    def cache_for(self, drifts):
        cache = self.base
        drifts = np.asarray(drifts)
        if drifts.size == 0 or cache.covers(drifts):
            return cache
        v_max = max(1.5 * cache.v_max, 1.1 * float(np.max(np.abs(drifts))))
        with self._lock:
            if v_max not in self._rebuilt:
                self._rebuilt[v_max] = self._build((-v_max, v_max))
                self.rebuilds += 1
            return self._rebuilt[v_max]

    def sample_times(self, drifts, rng):
        return sample_fpt(self.cache_for(drifts), drifts, rng)


def tabular_sampler(prior, boundary, n_v=500, t_max=DEFAULT_T_MAX, **kwargs):
    """Sampler whose base grid spans the prior support (symmetric around 0 for a point mass)."""
    lo, hi = prior.support()
    if hi - lo < 1e-9:
        half = max(abs(lo), abs(hi), 1.0)
        lo, hi = -half, half
    return FptSampler(boundary, (lo, hi), n_v, t_max, **kwargs)


def linear_sampler(scenario, n_v=801, t_max=DEFAULT_T_MAX, **kwargs):
    vm = scenario.v_max
    return FptSampler(scenario.boundary, (-vm, vm), n_v, t_max, **kwargs)


def sample_tabular_dataset(prior, boundary, n, ndt=0.0, seed=0, rep=0, sampler=None,
                           context=(), return_drifts=False):
    """``n`` observations with drifts drawn i.i.d. from ``prior``.

    Each observation draws ``v``, then ``z`` and ``t`` independently given
    ``v``; ``ndt`` is added to every time.
    """
    n = int(n)
    if n < 1:
        raise ConfigurationError("n must be positive")
    if ndt < 0:
        raise ConfigurationError("ndt must be nonnegative")
    if sampler is None:
        sampler = tabular_sampler(prior, boundary)
    elif sampler.boundary != float(boundary):
        raise ConfigurationError("sampler boundary does not match")
    drifts = prior.sample(make_rng(seed, rep, STREAM_DRIFT, *context), n)
    z = sample_choice(drifts, boundary, make_rng(seed, rep, STREAM_CHOICE, *context))
    t = sampler.sample_times(drifts, make_rng(seed, rep, STREAM_TIME, *context))
    if ndt:
        t = t + ndt
    obs = Observations(z, t)
    return (obs, drifts) if return_drifts else obs


def sample_linear_dataset(scenario, n, seed=0, rep=0, sampler=None, context=(),
                          return_latent=False):
    """``n`` observations with features ``psi`` and drifts ``psi . theta_i``."""
    n = int(n)
    if n < 1:
        raise ConfigurationError("n must be positive")
    if sampler is None:
        sampler = linear_sampler(scenario)
    elif sampler.boundary != scenario.boundary:
        raise ConfigurationError("sampler boundary does not match")
    d = scenario.dim
    rng_theta = make_rng(seed, rep, STREAM_DRIFT, *context)
    thetas = np.column_stack([p.sample(rng_theta, n) for p in scenario.priors()])
    psi = make_rng(seed, rep, STREAM_CONTEXT, *context).uniform(-1.0, 1.0, (n, d))
    drifts = np.einsum("ij,ij->i", psi, thetas)
    z = sample_choice(drifts, scenario.boundary, make_rng(seed, rep, STREAM_CHOICE, *context))
    t = sampler.sample_times(drifts, make_rng(seed, rep, STREAM_TIME, *context))
    if scenario.ndt:
        t = t + scenario.ndt
    obs = Observations(z, t, psi)
    return (obs, thetas, drifts) if return_latent else obs


def sample_mixed_boundary_dataset(prior, samplers, probs, n, seed=0, rep=0, context=()):
    """Tabular data where each labeler's boundary is drawn from a finite law.

    ``samplers`` holds one ``FptSampler`` per boundary value and ``probs``
    the matching probabilities.
    """
    n = int(n)
    probs = np.asarray(probs, dtype=np.float64)
    if len(samplers) != probs.size or not np.isclose(probs.sum(), 1.0):
        raise ConfigurationError("need one probability per sampler, summing to 1")
    which = make_rng(seed, rep, STREAM_BOUNDARY, *context).choice(probs.size, n, p=probs)
    drifts = prior.sample(make_rng(seed, rep, STREAM_DRIFT, *context), n)
    rng_z = make_rng(seed, rep, STREAM_CHOICE, *context)
    rng_t = make_rng(seed, rep, STREAM_TIME, *context)
    u = rng_z.random(n)
    boundaries = np.array([s.boundary for s in samplers])[which]
    z = np.where(u < expit(2.0 * boundaries * drifts), 1, -1)
    t = np.empty(n)
    for k, s in enumerate(samplers):
        idx = np.flatnonzero(which == k)
        if idx.size:
            t[idx] = s.sample_times(drifts[idx], rng_t)
    return Observations(z, t)
