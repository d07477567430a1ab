import csv
import io
import json
import math

import numpy as np
import pytest

from ddmpref import harness
from ddmpref.errors import ConfigurationError
from ddmpref.harness import ExperimentConfig

from .fixtures import pseudo_real_csv


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_tabular_smoke_and_row_count(tmp_path):
    cfg = ExperimentConfig(kind="tabular", priors=["uniform"], n_grid=[200, 500], reps=2)
    table = harness.run_tabular(cfg)
    assert len(table.rows) == 3 * 2 * 2
    rows = _rows(table.rows_csv())
    assert list(rows[0])[:6] == ["experiment", "estimator", "prior", "n", "rep", "estimate_0"]
    assert {"sq_error", "cossim", "boundary_hat", "ndt_hat", "seconds"} <= set(rows[0])
    assert all(r["seconds"] == "" for r in rows)
    out, summary = table.write(tmp_path / "r.csv")
    assert out.exists() and summary.name == "r_summary.csv"
    assert len(_rows(summary.read_text())) == 3 * 2


def test_tabular_ndt_adds_estimator():
    cfg = ExperimentConfig(kind="tabular", priors=["uniform"], n_grid=[500], reps=2, ndt=0.3)
    table = harness.run_tabular(cfg)
    assert {r.estimator for r in table.rows} == set(harness.TABULAR_ESTIMATORS) | {"plugin_mu_ndt"}
    assert all(r.ndt_hat is not None for r in table.select("plugin_mu_ndt"))


def test_timing_column_when_requested():
    cfg = ExperimentConfig(kind="tabular", priors=["uniform"], n_grid=[200], reps=2,
                           record_timing=True)
    assert all(r.seconds is not None and r.seconds >= 0 for r in harness.run_tabular(cfg).rows)


def test_linear_smoke():
    cfg = ExperimentConfig(kind="linear", priors=["gaussian", "point"], n_grid=[500], reps=2)
    table = harness.run_linear(cfg)
    assert len(table.rows) == 3 * 2 * 2
    assert {r.prior for r in table.rows} == {"gaussian_truncated", "point_mass"}
    assert table.dim == 4


def test_ablation_smoke():
    cfg = ExperimentConfig(kind="ablation", priors=["uniform"], n_grid=[1000, 5000], reps=3)
    table = harness.run_boundary_ablation(cfg)
    assert len(table.rows) == 2 * 2 * 3
    assert table.metadata["boundary"] == 1.25
    s = table.summary_for("richardson", "uniform", 5000)
    assert s["q25_boundary"] <= s["median_boundary"] <= s["q75_boundary"]
    assert "dominates" in s and s["target"] == 1.25


def test_ablation_linear_setting():
    cfg = ExperimentConfig(kind="ablation", priors=["gaussian"], n_grid=[1000], reps=2,
                           setting="linear")
    assert len(harness.run_boundary_ablation(cfg).rows) == 4


def test_real_smoke(tmp_path):
    path = tmp_path / "trials.csv"
    pseudo_real_csv(path, n_subjects=6, trials=100)
    cfg = ExperimentConfig(kind="real", n_grid=[100, 200], reps=3, bootstrap=200)
    table = harness.run_real(cfg, path)
    assert len(table.rows) == 2 * 2 * 3
    assert table.metadata["subjects_dropped"] == 1
    assert table.metadata["n_grid"] == [100, 200]
    s = table.summary_for("ols_theta_richardson", "data", 200)
    assert s["band_lo"] <= s["mean_cossim"] <= s["band_hi"]


def test_real_missing_file(tmp_path):
    cfg = ExperimentConfig(kind="real", n_grid=[100], reps=2)
    with pytest.raises(FileNotFoundError):
        harness.run_real(cfg, tmp_path / "absent.csv")


def test_estimator_errors_recorded_not_fatal():
    # n=2 point-mass data: all choices often agree, so bt_tabular fails in some rows
    cfg = ExperimentConfig(kind="tabular", priors=["point_mass"], mu_star=3.0, n_grid=[2],
                           reps=5)
    with pytest.warns(RuntimeWarning):
        table = harness.run_tabular(cfg)
    errs = [r for r in table.select("bt_tabular") if r.error]
    assert errs and all("SeparationError" in r.error for r in errs)
    assert all(r.sq_error is None for r in errs)


@pytest.mark.parametrize("kind", ["tabular", "linear"])
def test_deterministic_across_thread_counts(kind):
    base = dict(kind=kind, priors=["uniform"], n_grid=[300, 1000], reps=4)
    one = harness.run_experiment(ExperimentConfig(**base, threads=1))
    many = harness.run_experiment(ExperimentConfig(**base, threads=4))
    assert one.rows_csv() == many.rows_csv()
    assert one.summary_csv() == many.summary_csv()


def test_thread_env_override(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "3")
    assert harness.resolve_threads() == 3
    assert harness.resolve_threads(2) == 2
    monkeypatch.setenv(harness.THREADS_ENV, "x")
    with pytest.raises(ConfigurationError):
        harness.resolve_threads()


def test_config_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind="tabular", reps=1)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind="tabular", n_grid=[1000, 100])
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind="tabular", priors=["cauchy"])
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind="survey")
    with pytest.raises(ConfigurationError, match="bogus"):
        ExperimentConfig.from_dict({"kind": "tabular", "bogus": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kind": "linear", "reps": 3, "n_grid": [100, 200]}))
    cfg = ExperimentConfig.from_json(path, seed=9)
    assert cfg.reps == 3 and cfg.seed == 9 and cfg.priors[0] == "gaussian_truncated"
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_defaults():
    assert ExperimentConfig(kind="real").n_grid == [100, 250, 500, 1000, 2000, 5000]
    assert ExperimentConfig(kind="real").l2_penalty == 0.1
    assert ExperimentConfig(kind="ablation").reps == 10


def test_ci_half_width():
    stats = harness._ci_stats([1.0, 2.0, 3.0, 4.0])
    assert stats["ci_half"] == pytest.approx(1.96 * np.std([1, 2, 3, 4], ddof=1) / 2)


def test_ci_coverage_point_mass():
    # well-specified homogeneous drift: mean +/- CI covers mu in >= 90% of meta-runs
    covered = 0
    meta = 40
    for seed in range(meta):
        cfg = ExperimentConfig(kind="tabular", priors=["point_mass"], n_grid=[2000], reps=10,
                               seed=seed)
        table = harness.run_tabular(cfg)
        est = [r.estimate[0] for r in table.select("plugin_mu_oracle")]
        s = harness._ci_stats(est)
        covered += abs(s["mean"] - 0.25) <= s["ci_half"]
    assert covered >= 0.9 * meta
