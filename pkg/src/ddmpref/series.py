"""Closed-form quantities of the symmetric drift-diffusion model.

All densities refer to the first exit time of ``B_t + v t`` from ``(-b, b)``
with unit diffusion.  Two series representations exist for the zero-drift
exit density ``f0`` and for the numerator density ``q = f0 * w``: a
small-time (image) form and a large-time (eigenfunction) form.  The
dispatching evaluators use the small-time form for ``t <= b**2`` and the
large-time form above it; both are evaluated with a common exponential
factored out so that the ratios are formed from O(1) quantities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit

from ._backend import kernels
from .errors import DomainError, SeriesFallbackWarning

DEFAULT_TERMS = 100


def _check_beta(beta):
    beta = float(beta)
    if not (beta > 0.0 and math.isfinite(beta)):
        raise DomainError(f"boundary must be positive and finite, got {beta!r}")
    return beta


def _check_terms(terms):
    terms = int(terms)
    if terms < 1:
        raise DomainError(f"truncation must keep at least one term, got {terms}")
    return terms


def _as_times(t):
    arr = np.asarray(t, dtype=np.float64)
    scalar = arr.ndim == 0
    flat = np.atleast_1d(arr).ravel()
    if flat.size and not np.all(flat > 0.0):
        raise DomainError("times must be strictly positive")
    return flat, scalar, arr.shape


def _restore(values, scalar, shape):
    if scalar:
        return float(values[0])
    return values.reshape(shape)


def weight_w(beta, t, terms=DEFAULT_TERMS):
    """Response-time weight ``w_b(t)`` making ``Z * w_b(T)`` unbiased for the drift.

    Parameters
    ----------
    beta : float
        Boundary ``b > 0``.
    t : float or array_like
        Response times, all strictly positive.
    terms : int
        Number of series terms kept (early exit may use fewer).

    Returns
    -------
    float or ndarray
        Same shape as ``t``.

    Notes
    -----
    When ``beta**2 / t`` overflows the leading small-time asymptote
    ``beta / t - 1 / beta`` is returned and a ``SeriesFallbackWarning`` is
    emitted.
    """
    beta = _check_beta(beta)
    terms = _check_terms(terms)
    flat, scalar, shape = _as_times(t)
    with np.errstate(over="ignore"):
        overflow = ~np.isfinite(beta * beta / flat)
    if overflow.any():
        warnings.warn(
            f"{int(overflow.sum())} time(s) too small for the series; "
            "using the small-time asymptote",
            SeriesFallbackWarning,
            stacklevel=2,
        )
    with np.errstate(over="ignore"):
        values = kernels.weight_w(beta, flat, terms)
    return _restore(values, scalar, shape)


def log_f0_density(beta, t, terms=DEFAULT_TERMS):
    """Log of the zero-drift exit-time density; finite for every ``t > 0``."""
    beta = _check_beta(beta)
    terms = _check_terms(terms)
    flat, scalar, shape = _as_times(t)
    return _restore(kernels.log_f0(beta, flat, terms), scalar, shape)


def f0_density(beta, t, terms=DEFAULT_TERMS):
    """Zero-drift first-passage density ``f0(t; b)``."""
    out = np.exp(log_f0_density(beta, t, terms))
    return float(out) if np.ndim(out) == 0 else out


def q_density(beta, t, terms=DEFAULT_TERMS):
    """Numerator density ``q_b(t) = f0(t) * w_b(t)``.

    Its Laplace transform is ``sqrt(2s) / sinh(b sqrt(2s))``.
    """
    beta = _check_beta(beta)
    terms = _check_terms(terms)
    flat, scalar, shape = _as_times(t)
    with np.errstate(under="ignore"):
        values = kernels.q_density(beta, flat, terms)
    return _restore(values, scalar, shape)


# Raw (unfactored, non-dispatching) series.  These are the textbook forms and
# lose relative accuracy far from their own regime; they exist so the two
# characterizations can be compared directly.

def f0_small_time(beta, t, terms=DEFAULT_TERMS):
    beta = _check_beta(beta)
    flat, scalar, shape = _as_times(t)
    k = np.arange(_check_terms(terms))[:, None]
    c = (2 * k + 1) * beta
    s = (np.where(k % 2, -1.0, 1.0) * c * np.exp(-c * c / (2 * flat))).sum(axis=0)
    return _restore(math.sqrt(2 / math.pi) * flat ** -1.5 * s, scalar, shape)


def f0_large_time(beta, t, terms=DEFAULT_TERMS):
    beta = _check_beta(beta)
    flat, scalar, shape = _as_times(t)
    m = np.arange(_check_terms(terms))[:, None]
    odd = 2 * m + 1
    s = (np.where(m % 2, -1.0, 1.0) * odd
         * np.exp(-odd * odd * math.pi ** 2 * flat / (8 * beta * beta))).sum(axis=0)
    return _restore(math.pi / (2 * beta * beta) * s, scalar, shape)


def q_small_time(beta, t, terms=DEFAULT_TERMS):
    beta = _check_beta(beta)
    flat, scalar, shape = _as_times(t)
    k = np.arange(_check_terms(terms))[:, None]
    c2 = ((2 * k + 1) * beta) ** 2
    s = (np.exp(-c2 / (2 * flat)) * (c2 / flat - 1.0)).sum(axis=0)
    return _restore(math.sqrt(2 / math.pi) * flat ** -1.5 * s, scalar, shape)


def q_large_time(beta, t, terms=DEFAULT_TERMS):
    beta = _check_beta(beta)
    flat, scalar, shape = _as_times(t)
    m = np.arange(1, _check_terms(terms) + 1)[:, None]
    s = (np.where(m % 2, 1.0, -1.0) * m * m
         * np.exp(-m * m * math.pi ** 2 * flat / (2 * beta * beta))).sum(axis=0)
    return _restore(math.pi ** 2 / beta ** 3 * s, scalar, shape)


def _log_cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


def log_laplace_fixed_drift(v, beta, lam):
    """``log E[exp(-lam T)]`` at fixed drift ``v``; overflow-free."""
    beta = _check_beta(beta)
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0):
        raise DomainError("Laplace argument must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    out = _log_cosh(beta * v) - _log_cosh(beta * np.sqrt(2.0 * lam + v * v))
    return float(out) if out.ndim == 0 else out


def laplace_fixed_drift(v, beta, lam):
    """``E[exp(-lam T) | v] = cosh(b v) / cosh(b sqrt(2 lam + v^2))``."""
    out = np.exp(log_laplace_fixed_drift(v, beta, lam))
    return float(out) if np.ndim(out) == 0 else out


def choice_probability(v, beta):
    """Probability of ``Z = +1``: the logistic ``sigma(2 b v)``."""
    beta = _check_beta(beta)
    out = expit(2.0 * beta * np.asarray(v, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def expected_choice(v, beta):
    """``E[Z | v] = tanh(b v)``; exactly 0 at ``v = 0``."""
    beta = _check_beta(beta)
    out = np.tanh(beta * np.asarray(v, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def conditional_mean_weight(v, beta):
    """``E[w_b(T) | v] = v / tanh(b v)``, extended by its limit ``1/b`` at 0."""
    beta = _check_beta(beta)
    v = np.asarray(v, dtype=np.float64)
    safe = np.where(v == 0.0, 1.0, v)
    out = np.where(v == 0.0, 1.0 / beta, safe / np.tanh(beta * safe))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EnvelopeInterval:
    """Compact boundary interval ``[lower, upper]`` for the weight envelope.

    The breakpoints are ``tau0 = 0.05 * lower**2`` and ``tau1 = 4 * upper**2``
    (clamped to ``tau0 <= 1 <= tau1``); the tail rate is
    ``3 pi^2 / (8 upper^2)``; the constant is calibrated once by maximizing
    the exact ``|w|`` over a grid and inflating by 1.5.
    """

    lower: float
    upper: float
    tau0: float = field(init=False)
    tau1: float = field(init=False)
    decay: float = field(init=False)

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if not (0.0 < lo <= hi and math.isfinite(hi)):
            raise DomainError(f"invalid envelope interval [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "tau0", min(1.0, 0.05 * lo * lo))
        object.__setattr__(self, "tau1", max(1.0, 4.0 * hi * hi))
        object.__setattr__(self, "decay", 3.0 * math.pi ** 2 / (8.0 * hi * hi))

    @property
    def constant(self):
        return _calibrate_envelope(self.lower, self.upper)

    def shape(self, t):
        # Envelope with unit constant.
        t = np.asarray(t, dtype=np.float64)
        return np.where(
            t <= self.tau0,
            1.0 + 1.0 / t,
            np.where(t <= self.tau1, 1.0, np.exp(-self.decay * t)),
        )


@lru_cache(maxsize=64)
def _calibrate_envelope(lower, upper):
    interval = EnvelopeInterval(lower, upper)
    betas = np.linspace(lower, upper, 41)
    t = np.unique(np.concatenate([
        np.geomspace(interval.tau0 * 1e-4, interval.tau1 * 25.0, 4000),
        [interval.tau0, interval.tau1],
    ]))
    shape = interval.shape(t)
    worst = 0.0
    for b in betas:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SeriesFallbackWarning)
            ratio = np.abs(weight_w(b, t)) / shape
        worst = max(worst, float(np.max(ratio)))
    return 1.5 * worst


def envelope_bound(interval, t):
    """Piecewise envelope ``H_K(t)`` dominating ``|w_beta(t)|`` for beta in the interval."""
    flat, scalar, shape = _as_times(t)
    values = interval.constant * interval.shape(flat)
    return _restore(values, scalar, shape)
