"""Command-line entry point ``ddmpref``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import boundary as bnd
from .data import (ColumnMap, read_observations_file, read_trials_file,
                   records_to_observations, subject_target, write_observations_file)
from .drift import ols_theta, plugin_mu, plugin_mu_ndt
from .errors import ConfigurationError
from .harness import KINDS, ExperimentConfig, run_experiment
from .simulator import (FptGridCache, LinearScenario, build_cache, sample_linear_dataset,
                        sample_tabular_dataset, tabular_prior)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    pass


def _schedule(args):
    return bnd.LambdaSchedule(args.lambda_exponent, args.lambda_floor)


def _add_schedule_flags(p):
    p.add_argument("--lambda-exponent", type=float, default=1.5)
    p.add_argument("--lambda-floor", type=float, default=1.0)


def _boundary_from(args, obs):
    if args.boundary is not None:
        return args.boundary
    return bnd.richardson_boundary(obs.times, _schedule(args)).boundary


def cmd_simulate(args):
    if args.kind == "tabular":
        prior = tabular_prior(args.prior, args.mu)
        obs = sample_tabular_dataset(prior, args.boundary, args.n, args.ndt, args.seed, args.rep)
    else:
        scenario = LinearScenario(family=args.prior, boundary=args.boundary, ndt=args.ndt)
        obs = sample_linear_dataset(scenario, args.n, args.seed, args.rep)
    write_observations_file(obs, args.out)
    print(f"wrote {len(obs)} observations to {args.out}")


def cmd_estimate_boundary(args):
    obs = read_observations_file(args.input)
    fn = {"richardson": bnd.richardson_boundary, "one_scale": bnd.one_scale_boundary,
          "three_scale_ndt": bnd.three_scale_ndt}[args.method]
    schedule = _schedule(args)
    if args.method == "three_scale_ndt":
        schedule = bnd.LambdaSchedule(args.lambda_exponent, args.lambda_floor,
                                      bnd.NDT_SCHEDULE.multiplier)
    est = fn(obs.times, schedule, args.lam)
    print(f"boundary: {est.boundary!r}")
    if est.ndt is not None:
        print(f"ndt: {est.ndt!r}")
    print(f"lambda: {est.lambda_used!r}")
    print(f"n: {est.n}")
    print(f"method: {est.method}")


def cmd_estimate_drift(args):
    obs = read_observations_file(args.input)
    if args.ndt_correct:
        e = bnd.three_scale_ndt(obs.times)
        b = args.boundary if args.boundary is not None else e.boundary
        eps = bnd.trim_epsilon(len(obs), args.epsilon_power)
        rep = plugin_mu_ndt(obs, b, e.ndt, eps, args.terms)
    else:
        rep = plugin_mu(obs, _boundary_from(args, obs), args.terms)
    print(f"estimate: {rep.estimate!r}")
    print(f"boundary: {rep.boundary_used!r}")
    if rep.ndt_used is not None:
        print(f"ndt: {rep.ndt_used!r}")
        print(f"trimmed: {rep.n_trimmed}")
    print(f"n: {rep.n_used}")


def cmd_estimate_theta(args):
    obs = read_observations_file(args.input)
    if obs.features is None:
        raise _UsageError("input file has no feature columns x0, x1, ...")
    rep = ols_theta(obs, _boundary_from(args, obs), args.terms, args.ridge)
    print("estimate: [" + ", ".join(repr(float(x)) for x in rep.estimate) + "]")
    print(f"boundary: {rep.boundary_used!r}")
    print(f"n: {rep.n_used}")


def _column_map(path):
    if path is None:
        return ColumnMap()
    with open(path, encoding="utf-8") as fh:
        return ColumnMap(**json.load(fh))


def cmd_ingest(args):
    cmap = _column_map(args.column_map)
    parsed = read_trials_file(args.input, cmap, args.max_row_errors)
    print(f"rows: {parsed.n_rows}")
    print(f"retained: {parsed.n_retained}")
    print(f"dropped_missing: {parsed.n_dropped}")
    print(f"row_errors: {len(parsed.row_errors)}")
    for line, msg in parsed.row_errors:
        print(f"  line {line}: {msg}", file=sys.stderr)
    target = subject_target(parsed.records, args.l2_penalty)
    print(target.report())
    if args.out:
        dropped = set(target.dropped_ids)
        obs = records_to_observations(r for r in parsed.records if r.subject_id not in dropped)
        write_observations_file(obs, args.out)
        print(f"wrote {len(obs)} observations to {args.out}")


def cmd_experiment(args):
    overrides = dict(seed=args.seed, reps=args.reps, out=args.out, threads=args.threads,
                     data_path=args.data, boundary=args.boundary)
    if args.prior:
        overrides["priors"] = args.prior
    if args.n_grid:
        overrides["n_grid"] = args.n_grid
    if args.setting:
        overrides["setting"] = args.setting
    if args.timing:
        overrides["record_timing"] = True
    try:
        if args.config:
            config = ExperimentConfig.from_json(args.config, **overrides)
            if config.kind != args.kind:
                raise ConfigurationError(
                    f"config kind {config.kind!r} does not match subcommand {args.kind!r}")
        else:
            config = ExperimentConfig.from_dict({"kind": args.kind}, **overrides)
    except (ConfigurationError, TypeError) as exc:
        raise _UsageError(str(exc)) from exc
    table = run_experiment(config)
    out = config.out or f"{config.kind}_results.csv"
    rows_path, summary_path = table.write(out)
    print(f"wrote {len(table.rows)} rows to {rows_path} and summary to {summary_path}")
    if config.kind == "real":
        print("n_grid: " + ", ".join(str(n) for n in config.n_grid))
        print("theta_star: " + ", ".join(f"{x:.10g}" for x in table.metadata["theta_star"]))


def cmd_cache_build(args):
    cache = build_cache(args.boundary, (args.v_min, args.v_max), args.n_v, args.t_max)
    cache.save(args.out)
    print(f"wrote {cache.cdf_table.shape[0]}x{cache.cdf_table.shape[1]} cache to {args.out}")


def cmd_cache_inspect(args):
    cache = FptGridCache.load(args.input)
    tg = cache.time_grid
    print(f"boundary: {cache.boundary!r}")
    print(f"drift_grid: {cache.drift_grid.size} points on [{cache.v_lo!r}, {cache.v_hi!r}]")
    print(f"time_grid: {tg.size} points on [{tg[0]!r}, {tg[-1]!r}]")
    print(f"t_max: {cache.t_max!r}")
    rows_ok = bool(np.all(np.diff(cache.cdf_table, axis=1) >= 0) and
                   np.all(cache.cdf_table[:, -1] == 1.0))
    print(f"rows_valid: {str(rows_ok).lower()}")


def build_parser():
    parser = argparse.ArgumentParser(prog="ddmpref",
                                     description="Preference estimation from choices and response times.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--kind", choices=["tabular", "linear"], default="tabular")
    p.add_argument("--prior", default="uniform")
    p.add_argument("--mu", type=float, default=0.25)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--boundary", type=float, default=1.25)
    p.add_argument("--ndt", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-boundary", help="boundary from response times")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--method", choices=["richardson", "one_scale", "three_scale_ndt"],
                   default="richardson")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed Laplace scale instead of the schedule")
    _add_schedule_flags(p)
    p.set_defaults(func=cmd_estimate_boundary)

    for name, func, helptext in (("estimate-drift", cmd_estimate_drift, "average drift"),
                                 ("estimate-theta", cmd_estimate_theta, "preference vector")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--boundary", type=float, default=None,
                       help="known boundary (default: two-scale estimate)")
        p.add_argument("--terms", type=int, default=100)
        _add_schedule_flags(p)
        if name == "estimate-drift":
            p.add_argument("--ndt-correct", action="store_true")
            p.add_argument("--epsilon-power", type=float, default=1.0)
        else:
            p.add_argument("--ridge", type=float, default=0.0)
        p.set_defaults(func=func)

    p = sub.add_parser("experiment", help="run a replicated experiment")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config")
    p.add_argument("--prior", action="append")
    p.add_argument("--n-grid", type=int, nargs="+")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--boundary", type=float)
    p.add_argument("--setting", choices=["tabular", "linear"])
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--timing", action="store_true", help="record wall time per estimator")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ingest", help="parse a trial table and report the subject target")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--column-map", help="JSON file with ColumnMap fields")
    p.add_argument("--l2-penalty", type=float, default=0.1)
    p.add_argument("--max-row-errors", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cache", help="build or inspect a sampling cache")
    csub = p.add_subparsers(dest="cache_command", required=True)
    c = csub.add_parser("build")
    c.add_argument("--boundary", type=float, required=True)
    c.add_argument("--v-min", type=float, required=True)
    c.add_argument("--v-max", type=float, required=True)
    c.add_argument("--n-v", type=int, default=500)
    c.add_argument("--t-max", type=float, default=20.0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cache_build)
    c = csub.add_parser("inspect")
    c.add_argument("input")
    c.set_defaults(func=cmd_cache_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        args.func(args)
    except _UsageError as exc:
        print(f"ddmpref: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"ddmpref: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
