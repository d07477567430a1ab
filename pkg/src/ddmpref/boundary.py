"""Boundary and non-decision-time estimation from response times alone.

The estimators read the boundary off the large-``lambda`` decay of the
empirical Laplace transform ``L_n(lambda) = mean(exp(-lambda * t))``:
``-log L(lambda) ~ b sqrt(2 lambda) - log(2 C0) + ...``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import LaplaceUnderflowError

ONE_SCALE = "one_scale"
RICHARDSON = "richardson"
THREE_SCALE_NDT = "three_scale_ndt"


@dataclass(frozen=True)
class LambdaSchedule:
    """Laplace-scale schedule ``lambda_n = max(floor, multiplier * (ln n) ** exponent)``."""

    exponent: float = 1.5
    floor: float = 1.0
    multiplier: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.exponent < 2.0:
            raise ValueError(f"schedule exponent must lie in (1, 2), got {self.exponent}")
        if not self.floor > 0.0:
            raise ValueError(f"schedule floor must be positive, got {self.floor}")
        if not self.multiplier > 0.0:
            raise ValueError(f"schedule multiplier must be positive, got {self.multiplier}")


DEFAULT_SCHEDULE = LambdaSchedule()
# The three-scale estimator reaches 9 lambda.  A quarter of the two-scale
# schedule keeps its largest scale (2.25 lambda_n) below the 4 lambda_n used by
# the two-scale estimator; at the full schedule the 9 lambda term is driven by
# the few smallest times and the estimates are badly biased at n ~ 1e6.
NDT_SCHEDULE = LambdaSchedule(multiplier=0.25)


@dataclass(frozen=True)
class BoundaryEstimate:
    boundary: float
    lambda_used: float
    n: int
    method: str
    ndt: float | None = None


def lambda_schedule_value(n, schedule=DEFAULT_SCHEDULE):
    """Laplace scale used for a sample of size ``n`` (``n >= 2``)."""
    n = float(n)
    if not n >= 2:
        raise ValueError(f"schedule needs at least two observations, got n={n:g}")
    if n < 100:
        warnings.warn(
            f"n={n:g} is too small for the asymptotic Laplace schedule; "
            "boundary estimates are unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    return max(schedule.floor, schedule.multiplier * math.log(n) ** schedule.exponent)


def trim_epsilon(n, power=1.0):
    """Trimming threshold ``(ln n) ** -power`` for the NDT-corrected drift estimator."""
    n = int(n)
    if n < 2:
        raise ValueError(f"trimming threshold needs n >= 2, got n={n}")
    return math.log(n) ** (-power)


def _check_times(times):
    times = np.ascontiguousarray(times, dtype=np.float64).ravel()
    if times.size == 0:
        raise ValueError("empty sample of response times")
    if not np.all(np.isfinite(times)) or not np.all(times > 0.0):
        raise ValueError("response times must be finite and strictly positive")
    return times


def empirical_laplace(times, lam):
    """Compensated sample mean of ``exp(-lam * t)``.

    Raises ``LaplaceUnderflowError`` when every term underflows; the
    estimators below work on the log scale and never hit that case.
    """
    times = _check_times(times)
    lam = float(lam)
    if lam < 0:
        raise ValueError("Laplace argument must be nonnegative")
    value = kernels.laplace_mean(times, lam, 0.0)
    if value == 0.0:
        raise LaplaceUnderflowError(
            f"empirical Laplace transform underflowed at lambda={lam:g}; "
            "use a smaller schedule exponent"
        )
    return value


def log_empirical_laplace(times, lam):
    """``log L_n(lam)`` computed after shifting by the smallest time."""
    times = _check_times(times)
    lam = float(lam)
    shift = float(times.min())
    return -lam * shift + math.log(kernels.laplace_mean(times, lam, shift))


def _scale(times, schedule, lam):
    if lam is not None:
        return float(lam)
    return lambda_schedule_value(times.size, schedule)


def one_scale_boundary(times, schedule=DEFAULT_SCHEDULE, lam=None):
    """``-log L_n(lambda_n) / sqrt(2 lambda_n)``; bias O(lambda^-1/2)."""
    times = _check_times(times)
    lam = _scale(times, schedule, lam)
    b = -log_empirical_laplace(times, lam) / math.sqrt(2.0 * lam)
    return BoundaryEstimate(b, lam, times.size, ONE_SCALE)


def richardson_boundary(times, schedule=DEFAULT_SCHEDULE, lam=None):
    """Two-scale estimate ``(log L(lambda) - log L(4 lambda)) / sqrt(2 lambda)``.

    Cancels the constant term of the log-Laplace expansion, leaving a
    population bias of order ``1 / lambda``.
    """
    times = _check_times(times)
    lam = _scale(times, schedule, lam)
    b = (log_empirical_laplace(times, lam)
         - log_empirical_laplace(times, 4.0 * lam)) / math.sqrt(2.0 * lam)
    return BoundaryEstimate(b, lam, times.size, RICHARDSON)


def three_scale_ndt(times, schedule=NDT_SCHEDULE, lam=None):
    """Joint boundary and non-decision-time estimate from scales lambda, 4 lambda, 9 lambda.

    For observed times ``S = T + a`` the log-Laplace transform gains the
    linear term ``-a lambda``; the three-point combinations cancel it (for
    the boundary) or isolate it (for ``a``).  The NDT estimate is reported
    unclamped and may be slightly negative.
    """
    times = _check_times(times)
    lam = _scale(times, schedule, lam)
    f1 = log_empirical_laplace(times, lam)
    f4 = log_empirical_laplace(times, 4.0 * lam)
    f9 = log_empirical_laplace(times, 9.0 * lam)
    b = (2.5 * f1 - 4.0 * f4 + 1.5 * f9) / math.sqrt(2.0 * lam)
    a = (-0.5 * f1 + f4 - 0.5 * f9) / lam
    return BoundaryEstimate(b, lam, times.size, THREE_SCALE_NDT, ndt=a)
