"""Drift and preference-vector estimators.

The plug-in estimators use the identity ``E[Z w_b(T) | v] = v``; the
choice-only baselines fit the logistic choice law ``P(Z = 1) = sigma(2 b v)``
at a calibration boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import linprog
from scipy.special import expit, log_expit

from .errors import OptimizationError, SeparationError, SingularityError
from .series import DEFAULT_TERMS, _check_beta, weight_w


@dataclass(frozen=True)
class EstimationReport:
    """Estimate plus the settings that produced it."""

    estimate: float | np.ndarray
    method: str
    boundary_used: float
    n_used: int
    n_trimmed: int = 0
    ndt_used: float | None = None
    iterations: int | None = None
    notes: tuple = field(default=())


def _require_features(obs):
    if obs.features is None:
        raise ValueError("this estimator needs comparison features")
    return obs.features


def plugin_mu(obs, boundary, terms=DEFAULT_TERMS):
    """Sample mean of ``z * w_b(t)``; unbiased for the population mean drift."""
    b = _check_beta(boundary)
    if len(obs) == 0:
        raise ValueError("no observations")
    vhat = obs.choices * weight_w(b, obs.times, terms)
    return EstimationReport(float(np.mean(vhat)), "plugin_mu", b, len(obs))


def plugin_mu_ndt(obs, boundary, ndt, epsilon, terms=DEFAULT_TERMS):
    """Drift estimate after subtracting a non-decision time.

    Observations with ``t - ndt < epsilon`` contribute zero; the average
    still divides by the full ``n``.  A negative ``ndt`` is clamped to 0.
    """
    b = _check_beta(boundary)
    n = len(obs)
    if n == 0:
        raise ValueError("no observations")
    if not epsilon > 0:
        raise ValueError("trimming threshold must be positive")
    notes = []
    ndt = float(ndt)
    if ndt < 0.0:
        warnings.warn(f"negative non-decision time {ndt:.4g} clamped to 0", RuntimeWarning,
                      stacklevel=2)
        notes.append("ndt clamped to 0")
        ndt = 0.0
    shifted = obs.times - ndt
    keep = shifted >= epsilon
    n_trim = int(n - keep.sum())
    if n_trim == n:
        warnings.warn("every observation was trimmed; estimate is 0", RuntimeWarning,
                      stacklevel=2)
        notes.append("all observations trimmed")
        total = 0.0
    else:
        total = float(np.sum(obs.choices[keep] * weight_w(b, shifted[keep], terms)))
    return EstimationReport(total / n, "plugin_mu_ndt", b, n, n_trim, ndt, notes=tuple(notes))


def _spd_solve(gram, rhs, what):
    d = gram.shape[0]
    evals, evecs = np.linalg.eigh(gram)
    scale = max(float(evals[-1]), 1.0)
    if evals[0] <= 1e-12 * scale:
        dim = int(np.argmax(np.abs(evecs[:, 0])))
        raise SingularityError(
            f"{what} is singular (smallest eigenvalue {evals[0]:.3g}); "
            f"feature {dim} is (nearly) collinear with the others", dimension=dim)
    try:
        return cho_solve(cho_factor(gram), rhs)
    except LinAlgError as exc:  # pragma: no cover - guarded by the eigen check
        raise SingularityError(f"{what} is not positive definite", dimension=d - 1) from exc


def ols_theta(obs, boundary, terms=DEFAULT_TERMS, ridge=0.0):
    """Least-squares preference vector from per-query drift estimates.

    Solves ``(Q + ridge I) theta = m`` with ``Q = mean(psi psi^T)`` and
    ``m = mean(psi * z * w_b(t))``.
    """
    b = _check_beta(boundary)
    psi = _require_features(obs)
    n, d = psi.shape
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    vhat = obs.choices * weight_w(b, obs.times, terms)
    gram = psi.T @ psi / n + ridge * np.eye(d)
    moment = psi.T @ vhat / n
    theta = _spd_solve(gram, moment, "empirical design second moment")
    return EstimationReport(theta, "ols_theta", b, n)


def bt_tabular(obs, calibration_boundary):
    """Choice-only drift estimate ``artanh(mean z) / b``."""
    b = _check_beta(calibration_boundary)
    if len(obs) == 0:
        raise ValueError("no observations")
    zbar = float(np.mean(obs.choices))
    if abs(zbar) >= 1.0:
        raise SeparationError("all choices agree; the logistic MLE is infinite")
    return EstimationReport(math.atanh(zbar) / b, "bt_tabular", b, len(obs))


def _separable(margins_design):
    # Is there theta != 0 with y_i . theta >= 0 for all i and sum > 0?
    # Feasibility LP: maximize sum(y theta) subject to y theta >= 0, |theta| <= 1.
    n, d = margins_design.shape
    res = linprog(-margins_design.sum(axis=0), A_ub=-margins_design, b_ub=np.zeros(n),
                  bounds=[(-1.0, 1.0)] * d, method="highs")
    return bool(res.status == 0 and -res.fun > 1e-9)


def bt_logistic(obs, calibration_boundary, l2_penalty=0.0, tol=1e-8, max_iter=500):
    """Logistic choice-only MLE for the preference vector.

    Minimizes ``sum(log(1 + exp(-2 b z psi . theta))) + l2 * ||theta||^2``, the
    penalized negative log-likelihood, by damped Newton from zero.  The
    objective is scaled by ``1 / n`` internally and iteration stops when the
    scaled gradient norm is at most ``tol``.
    """
    b = _check_beta(calibration_boundary)
    psi = _require_features(obs)
    if l2_penalty < 0:
        raise ValueError("l2 penalty must be nonnegative")
    n, d = psi.shape
    y = (2.0 * b) * obs.choices[:, None] * psi  # signed, scaled design

    unpenalized = l2_penalty == 0.0
    pen = l2_penalty / n  # penalty on the per-observation scale
    if unpenalized and np.all(obs.choices == obs.choices[0]):
        raise SeparationError("all choices agree; the unpenalized MLE does not exist")

    def loss(theta):
        return -float(np.mean(log_expit(y @ theta))) + pen * float(theta @ theta)

    theta = np.zeros(d)
    f = loss(theta)
    grad_norm = math.inf
    for it in range(1, max_iter + 1):
        m = y @ theta
        p = expit(-m)
        grad = -(y.T @ p) / n + 2.0 * pen * theta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            if unpenalized and np.all(m > 0.0):
                # a vanishing gradient with every margin positive means theta ran off
                raise SeparationError("choices are linearly separable; the MLE does not exist")
            return EstimationReport(theta, "bt_logistic", b, n, iterations=it - 1)
        hess = (y.T * (p * (1.0 - p))) @ y / n + 2.0 * pen * np.eye(d)
        try:
            step = cho_solve(cho_factor(hess), grad)
        except LinAlgError:
            step = grad
        t = 1.0
        while True:
            cand = theta - t * step
            fc = loss(cand)
            if fc <= f - 1e-4 * t * float(grad @ step) or t < 1e-12:
                break
            t *= 0.5
        theta, f = cand, fc
    if unpenalized and _separable(y):
        raise SeparationError("choices are linearly separable; the MLE does not exist")
    raise OptimizationError(
        f"logistic fit did not converge in {max_iter} iterations "
        f"(gradient norm {grad_norm:.3g})", grad_norm=grad_norm)
