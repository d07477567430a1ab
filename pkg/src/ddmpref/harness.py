"""Replicated experiments: tabular and linear MSE sweeps, boundary ablation, real data.

Every replication is an independent task whose random streams are keyed by
``(seed, rep, stream, experiment, prior, n)``, so results do not depend on
the number of worker threads or their scheduling.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import boundary as bnd
from .data import (ColumnMap, cosine_similarity, read_trials_file, records_to_observations,
                   subject_target, subsample)
from .drift import bt_logistic, bt_tabular, ols_theta, plugin_mu, plugin_mu_ndt
from .errors import ConfigurationError
from .simulator import (LinearScenario, canonical_family, linear_sampler, make_rng,
                        sample_linear_dataset, sample_tabular_dataset, tabular_prior,
                        tabular_sampler)

KINDS = ("tabular", "linear", "ablation", "real")
_EXPERIMENT_CODES = {"tabular": 1, "linear": 2, "ablation": 3, "real": 4}
_BOOTSTRAP_STREAM = 7
THREADS_ENV = "DDMPREF_THREADS"


@dataclass
class ExperimentConfig:
    """Settings for one experiment; mirrors the JSON config file field by field."""

    kind: str = "tabular"
    priors: list | None = None
    mu_star: float = 0.25
    theta_star: list = field(default_factory=lambda: [0.25, -0.15, 0.10, -0.30])
    sigma_theta: float = 0.5
    boundary: float = 1.25
    ndt: float = 0.0
    n_grid: list | None = None
    reps: int | None = None
    seed: int = 0
    lambda_exponent: float = 1.5
    lambda_floor: float = 1.0
    terms: int = 100
    ridge: float = 0.0
    l2_penalty: float | None = None
    epsilon_power: float = 1.0
    setting: str = "tabular"
    data_path: str | None = None
    column_map: dict | None = None
    out: str | None = None
    threads: int | None = None
    record_timing: bool = False
    t_max: float = 20.0
    n_v: int | None = None
    bootstrap: int = 2000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        defaults = _DEFAULTS[self.kind]
        for name in ("priors", "n_grid", "reps", "l2_penalty"):
            if getattr(self, name) is None:
                setattr(self, name, defaults[name])
        self.validate()

    def validate(self):
        if int(self.reps) < 2:
            raise ConfigurationError("reps must be at least 2")
        grid = [int(n) for n in self.n_grid]
        if not grid or grid[0] < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("n_grid must be strictly increasing with entries >= 2")
        self.n_grid = grid
        self.reps = int(self.reps)
        if self.kind != "real":
            self.priors = [canonical_family(p) for p in self.priors]
            if not self.priors:
                raise ConfigurationError("at least one prior is required")
        if self.setting not in ("tabular", "linear"):
            raise ConfigurationError(f"unknown ablation setting {self.setting!r}")
        if not 1.0 < self.lambda_exponent < 2.0:
            raise ConfigurationError("lambda_exponent must lie in (1, 2)")
        if self.boundary <= 0 or self.ndt < 0 or self.ridge < 0 or self.l2_penalty < 0:
            raise ConfigurationError("boundary must be positive; ndt, ridge, l2_penalty >= 0")
        if self.threads is not None and int(self.threads) < 1:
            raise ConfigurationError("threads must be positive")

    @classmethod
    def from_dict(cls, data, **overrides):
        data = dict(data)
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path, **overrides):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
        return cls.from_dict(data, **overrides)

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def schedule(self):
        return bnd.LambdaSchedule(self.lambda_exponent, self.lambda_floor)


_DEFAULTS = {
    "tabular": dict(priors=["uniform", "beta_shifted"], n_grid=[10**3, 10**4, 10**5, 10**6],
                    reps=20, l2_penalty=0.0),
    "linear": dict(priors=["gaussian_truncated", "uniform", "beta_shifted", "laplace_truncated"],
                   n_grid=[10**3, 10**4, 10**5, 10**6], reps=20, l2_penalty=0.0),
    "ablation": dict(priors=["uniform", "beta_shifted"], n_grid=[10**4, 10**5, 10**6], reps=10,
                     l2_penalty=0.0),
    "real": dict(priors=[], n_grid=[100, 250, 500, 1000, 2000, 5000], reps=50, l2_penalty=0.1),
}


@dataclass
class ResultRow:
    experiment: str
    estimator: str
    prior: str
    n: int
    rep: int
    estimate: tuple = ()
    sq_error: float | None = None
    cossim: float | None = None
    boundary_hat: float | None = None
    ndt_hat: float | None = None
    seconds: float | None = None
    error: str = ""


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


@dataclass
class ResultTable:
    """Per-replication rows plus per-(prior, estimator, n) aggregates."""

    experiment: str
    rows: list
    summary: list
    summary_columns: list
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self):
        return max((len(r.estimate) for r in self.rows), default=0)

    def rows_csv(self):
        d = self.dim
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "estimator", "prior", "n", "rep"]
                   + [f"estimate_{k}" for k in range(d)]
                   + ["sq_error", "cossim", "boundary_hat", "ndt_hat", "seconds", "error"])
        for r in self.rows:
            est = list(r.estimate) + [None] * (d - len(r.estimate))
            w.writerow([r.experiment, r.estimator, r.prior, r.n, r.rep]
                       + [_fmt(x) for x in est]
                       + [_fmt(r.sq_error), _fmt(r.cossim), _fmt(r.boundary_hat),
                          _fmt(r.ndt_hat), _fmt(r.seconds), r.error])
        return buf.getvalue()

    def summary_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.summary_columns)
        for s in self.summary:
            w.writerow([_fmt(s.get(c)) if not isinstance(s.get(c), str) else s[c]
                        for c in self.summary_columns])
        return buf.getvalue()

    def write(self, out):
        """Write ``out`` (long form) and ``<stem>_summary.csv`` next to it."""
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(self.rows_csv(), encoding="utf-8")
        summary_path = out.with_name(out.stem + "_summary.csv")
        summary_path.write_text(self.summary_csv(), encoding="utf-8")
        return out, summary_path

    def select(self, estimator=None, prior=None, n=None):
        return [r for r in self.rows
                if (estimator is None or r.estimator == estimator)
                and (prior is None or r.prior == prior)
                and (n is None or r.n == n)]

    def summary_for(self, estimator, prior, n):
        for s in self.summary:
            if s["estimator"] == estimator and s["prior"] == prior and s["n"] == n:
                return s
        raise KeyError((estimator, prior, n))


def resolve_threads(threads=None):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _run_tasks(func, tasks, threads):
    threads = resolve_threads(threads)
    if threads == 1 or len(tasks) <= 1:
        results = [func(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(func, tasks))
    return [row for batch in results for row in batch]


def _attempt(config, make_row, func):
    """Run ``func`` and fill a row; estimator failures become the row's error text."""
    start = time.perf_counter()
    try:
        values = func()
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return make_row(error=f"{type(exc).__name__}: {exc}")
    row = make_row(**values)
    if config.record_timing:
        row.seconds = time.perf_counter() - start
    return row


def _estimate_tuple(x):
    return tuple(float(v) for v in np.atleast_1d(x))


def _sort_rows(rows, priors, estimators):
    p_idx = {p: i for i, p in enumerate(priors)}
    e_idx = {e: i for i, e in enumerate(estimators)}
    return sorted(rows, key=lambda r: (p_idx.get(r.prior, 0), e_idx[r.estimator], r.n, r.rep))


def _ci_stats(values):
    arr = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return dict(count=0)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else float("nan")
    return dict(count=int(arr.size), mean=float(np.mean(arr)), std=std,
                ci_half=1.96 * std / math.sqrt(arr.size))


def _grouped(rows):
    groups = {}
    for r in rows:
        groups.setdefault((r.prior, r.estimator, r.n), []).append(r)
    return groups


# ---------------------------------------------------------------- tabular

TABULAR_ESTIMATORS = ("bt_tabular", "plugin_mu_oracle", "plugin_mu_richardson")
TABULAR_NDT_ESTIMATOR = "plugin_mu_ndt"


def _tabular_estimators(config):
    if config.ndt > 0:
        return TABULAR_ESTIMATORS + (TABULAR_NDT_ESTIMATOR,)
    return TABULAR_ESTIMATORS


def _tabular_task(config, samplers, task):
    prior_name, p_idx, n, rep = task
    prior = tabular_prior(prior_name, config.mu_star)
    obs = sample_tabular_dataset(prior, config.boundary, n, config.ndt, config.seed, rep,
                                 samplers[prior_name],
                                 context=(_EXPERIMENT_CODES["tabular"], p_idx, n))
    mu = config.mu_star

    def row(estimator, **kw):
        return ResultRow("tabular", estimator, prior_name, n, rep, **kw)

    def scalar(report, **extra):
        est = report.estimate
        return dict(estimate=(est,), sq_error=(est - mu) ** 2, **extra)

    out = [
        _attempt(config, lambda **kw: row("bt_tabular", **kw),
                 lambda: scalar(bt_tabular(obs, config.boundary))),
        _attempt(config, lambda **kw: row("plugin_mu_oracle", **kw),
                 lambda: scalar(plugin_mu(obs, config.boundary, config.terms),
                                boundary_hat=config.boundary)),
    ]

    def richardson():
        b = bnd.richardson_boundary(obs.times, config.schedule).boundary
        return scalar(plugin_mu(obs, b, config.terms), boundary_hat=b)

    out.append(_attempt(config, lambda **kw: row("plugin_mu_richardson", **kw), richardson))
    if config.ndt > 0:
        def ndt_est():
            e = bnd.three_scale_ndt(obs.times)
            eps = bnd.trim_epsilon(n, config.epsilon_power)
            return scalar(plugin_mu_ndt(obs, e.boundary, e.ndt, eps, config.terms),
                          boundary_hat=e.boundary, ndt_hat=e.ndt)
        out.append(_attempt(config, lambda **kw: row(TABULAR_NDT_ESTIMATOR, **kw), ndt_est))
    return out


def _mse_summary(rows, priors, estimators, n_grid, target=None):
    groups = _grouped(rows)
    summary = []
    for prior in priors:
        for est in estimators:
            for n in n_grid:
                g = groups.get((prior, est, n), [])
                stats = _ci_stats([r.sq_error for r in g])
                summary.append(dict(
                    prior=prior, estimator=est, n=n, reps=len(g), failures=sum(bool(r.error) for r in g),
                    mse=stats.get("mean"), mse_std=stats.get("std"), mse_ci_half=stats.get("ci_half"),
                    mean_boundary_hat=_ci_stats([r.boundary_hat for r in g]).get("mean"),
                    target=target))
    return summary


MSE_COLUMNS = ["prior", "estimator", "n", "reps", "failures", "mse", "mse_std", "mse_ci_half",
               "mean_boundary_hat", "target"]


def run_tabular(config):
    """Monte-Carlo MSE of the mean-drift estimators versus sample size."""
    samplers = {p: tabular_sampler(tabular_prior(p, config.mu_star), config.boundary,
                                   n_v=config.n_v or 500, t_max=config.t_max)
                for p in config.priors}
    tasks = [(p, i, n, rep) for i, p in enumerate(config.priors)
             for n in config.n_grid for rep in range(config.reps)]
    rows = _run_tasks(lambda t: _tabular_task(config, samplers, t), tasks, config.threads)
    estimators = _tabular_estimators(config)
    rows = _sort_rows(rows, config.priors, estimators)
    summary = _mse_summary(rows, config.priors, estimators, config.n_grid, config.mu_star)
    return ResultTable("tabular", rows, summary, MSE_COLUMNS,
                       dict(mu_star=config.mu_star, boundary=config.boundary))


# ---------------------------------------------------------------- linear

LINEAR_ESTIMATORS = ("bt_logistic", "ols_theta_oracle", "ols_theta_richardson")


def _scenario(config, family):
    return LinearScenario(tuple(config.theta_star), config.sigma_theta, family,
                          config.boundary, config.ndt)


def _linear_task(config, sampler, task):
    prior_name, p_idx, n, rep = task
    scenario = _scenario(config, prior_name)
    obs = sample_linear_dataset(scenario, n, config.seed, rep, sampler,
                                context=(_EXPERIMENT_CODES["linear"], p_idx, n))
    theta_star = np.asarray(config.theta_star, dtype=float)

    def row(estimator, **kw):
        return ResultRow("linear", estimator, prior_name, n, rep, **kw)

    def vector(est, **extra):
        est = np.asarray(est)
        return dict(estimate=_estimate_tuple(est), sq_error=float(np.sum((est - theta_star) ** 2)),
                    cossim=_safe_cossim(est, theta_star), **extra)

    def richardson():
        b = bnd.richardson_boundary(obs.times, config.schedule).boundary
        return vector(ols_theta(obs, b, config.terms, config.ridge).estimate, boundary_hat=b)

    return [
        _attempt(config, lambda **kw: row("bt_logistic", **kw),
                 lambda: vector(bt_logistic(obs, config.boundary, config.l2_penalty).estimate)),
        _attempt(config, lambda **kw: row("ols_theta_oracle", **kw),
                 lambda: vector(ols_theta(obs, config.boundary, config.terms, config.ridge).estimate,
                                boundary_hat=config.boundary)),
        _attempt(config, lambda **kw: row("ols_theta_richardson", **kw), richardson),
    ]


def _safe_cossim(a, b):
    try:
        return cosine_similarity(a, b)
    except ValueError:
        return None


def run_linear(config):
    """Monte-Carlo MSE of the preference-vector estimators versus sample size."""
    # every prior shares the boundary and the drift range, hence one sampler
    sampler = linear_sampler(_scenario(config, config.priors[0]), n_v=config.n_v or 801,
                             t_max=config.t_max)
    tasks = [(p, i, n, rep) for i, p in enumerate(config.priors)
             for n in config.n_grid for rep in range(config.reps)]
    rows = _run_tasks(lambda t: _linear_task(config, sampler, t), tasks, config.threads)
    rows = _sort_rows(rows, config.priors, LINEAR_ESTIMATORS)
    summary = _mse_summary(rows, config.priors, LINEAR_ESTIMATORS, config.n_grid)
    return ResultTable("linear", rows, summary, MSE_COLUMNS,
                       dict(theta_star=list(config.theta_star), boundary=config.boundary))


# ---------------------------------------------------------------- ablation

ABLATION_ESTIMATORS = ("one_scale", "richardson")
ABLATION_COLUMNS = ["prior", "estimator", "n", "reps", "failures", "median_boundary",
                    "q25_boundary", "q75_boundary", "iqr_boundary", "median_abs_error",
                    "dominates", "target"]


def _ablation_task(config, samplers, task):
    prior_name, p_idx, n, rep = task
    context = (_EXPERIMENT_CODES["ablation"], p_idx, n)
    if config.setting == "tabular":
        obs = sample_tabular_dataset(tabular_prior(prior_name, config.mu_star), config.boundary,
                                     n, 0.0, config.seed, rep, samplers[prior_name],
                                     context=context)
    else:
        obs = sample_linear_dataset(_scenario(config, prior_name), n, config.seed, rep,
                                    samplers[prior_name], context=context)
    b_star = config.boundary

    def row(estimator, **kw):
        return ResultRow("ablation", estimator, prior_name, n, rep, **kw)

    def est(fn):
        b = fn(obs.times, config.schedule).boundary
        return dict(estimate=(b,), boundary_hat=b, sq_error=(b - b_star) ** 2)

    return [
        _attempt(config, lambda **kw: row("one_scale", **kw),
                 lambda: est(bnd.one_scale_boundary)),
        _attempt(config, lambda **kw: row("richardson", **kw),
                 lambda: est(bnd.richardson_boundary)),
    ]


def run_boundary_ablation(config):
    """Median and IQR of the one-scale and two-scale boundary estimates."""
    if config.setting == "tabular":
        samplers = {p: tabular_sampler(tabular_prior(p, config.mu_star), config.boundary,
                                       n_v=config.n_v or 500, t_max=config.t_max)
                    for p in config.priors}
    else:
        shared = linear_sampler(_scenario(config, config.priors[0]), n_v=config.n_v or 801,
                                t_max=config.t_max)
        samplers = {p: shared for p in config.priors}
    tasks = [(p, i, n, rep) for i, p in enumerate(config.priors)
             for n in config.n_grid for rep in range(config.reps)]
    rows = _run_tasks(lambda t: _ablation_task(config, samplers, t), tasks, config.threads)
    rows = _sort_rows(rows, config.priors, ABLATION_ESTIMATORS)
    groups = _grouped(rows)
    summary = []
    for prior in config.priors:
        for n in config.n_grid:
            med_err = {}
            for est in ABLATION_ESTIMATORS:
                g = groups.get((prior, est, n), [])
                b = np.array([r.boundary_hat for r in g if r.boundary_hat is not None])
                entry = dict(prior=prior, estimator=est, n=n, reps=len(g),
                             failures=sum(bool(r.error) for r in g), target=config.boundary)
                if b.size:
                    q25, q50, q75 = np.percentile(b, [25, 50, 75])
                    med_err[est] = float(np.median(np.abs(b - config.boundary)))
                    entry.update(median_boundary=float(q50), q25_boundary=float(q25),
                                 q75_boundary=float(q75), iqr_boundary=float(q75 - q25),
                                 median_abs_error=med_err[est])
                summary.append(entry)
            if len(med_err) == 2:
                summary[-1]["dominates"] = med_err["richardson"] < med_err["one_scale"]
    return ResultTable("ablation", rows, summary, ABLATION_COLUMNS,
                       dict(boundary=config.boundary, setting=config.setting))


# ---------------------------------------------------------------- real data

REAL_ESTIMATORS = ("bt_logistic", "ols_theta_richardson")
REAL_COLUMNS = ["prior", "estimator", "n", "reps", "failures", "mean_cossim", "band_lo",
                "band_hi", "mean_boundary_hat"]


def _real_task(config, pooled, theta_star, task):
    n, rep = task
    sub = subsample(pooled, n, config.seed, rep, context=(_EXPERIMENT_CODES["real"], n))

    def row(estimator, **kw):
        return ResultRow("real", estimator, "data", n, rep, **kw)

    def vector(est, **extra):
        return dict(estimate=_estimate_tuple(est), cossim=cosine_similarity(est, theta_star),
                    **extra)

    def ddm():
        b = bnd.richardson_boundary(sub.times, config.schedule).boundary
        return vector(ols_theta(sub, b, config.terms, config.ridge).estimate, boundary_hat=b)

    return [
        _attempt(config, lambda **kw: row("bt_logistic", **kw),
                 lambda: vector(bt_logistic(sub, 1.0, config.l2_penalty).estimate)),
        _attempt(config, lambda **kw: row("ols_theta_richardson", **kw), ddm),
    ]


def bootstrap_band(values, n_boot, rng, level=0.95):
    """Percentile band for the mean of ``values``."""
    values = np.asarray(values, dtype=float)
    idx = rng.integers(0, values.size, (n_boot, values.size))
    means = values[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def run_real(config, csv_path=None):
    """Cosine similarity to the subject-level target versus subsample size."""
    path = csv_path or config.data_path
    if path is None:
        raise ConfigurationError("the real-data experiment needs a data file")
    if not Path(path).is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    cmap = ColumnMap(**(config.column_map or {}))
    parsed = read_trials_file(path, cmap)
    target = subject_target(parsed.records, config.l2_penalty)
    dropped = set(target.dropped_ids)
    pooled = records_to_observations(r for r in parsed.records if r.subject_id not in dropped)
    theta_star = target.theta_star
    tasks = [(n, rep) for n in config.n_grid for rep in range(config.reps)]
    rows = _run_tasks(lambda t: _real_task(config, pooled, theta_star, t), tasks, config.threads)
    rows = _sort_rows(rows, ["data"], REAL_ESTIMATORS)
    groups = _grouped(rows)
    summary = []
    for est_i, est in enumerate(REAL_ESTIMATORS):
        for n in config.n_grid:
            g = groups.get(("data", est, n), [])
            cos = [r.cossim for r in g if r.cossim is not None]
            entry = dict(prior="data", estimator=est, n=n, reps=len(g),
                         failures=sum(bool(r.error) for r in g),
                         mean_boundary_hat=_ci_stats([r.boundary_hat for r in g]).get("mean"))
            if cos:
                rng = make_rng(config.seed, 0, _BOOTSTRAP_STREAM, _EXPERIMENT_CODES["real"],
                               est_i, n)
                entry["mean_cossim"] = float(np.mean(cos))
                entry["band_lo"], entry["band_hi"] = bootstrap_band(cos, config.bootstrap, rng)
            summary.append(entry)
    meta = dict(theta_star=[float(x) for x in theta_star], subjects_used=target.subjects_used,
                subjects_dropped=target.subjects_dropped, n_pooled=len(pooled),
                rows_dropped=parsed.n_dropped, row_errors=len(parsed.row_errors),
                n_grid=list(config.n_grid))
    return ResultTable("real", rows, summary, REAL_COLUMNS, meta)


RUNNERS = {"tabular": run_tabular, "linear": run_linear, "ablation": run_boundary_ablation,
           "real": run_real}


def run_experiment(config):
    return RUNNERS[config.kind](config)
