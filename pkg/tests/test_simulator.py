import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from ddmpref import series, simulator as sim
from ddmpref._backend import kernels
from ddmpref.errors import ConfigurationError

from . import oracles


@pytest.fixture(scope="module")
def cache():
    return sim.build_cache(1.25, (-2.0, 2.0), 81)


def test_time_grid_layout():
    tg = sim.time_grid()
    assert tg.size == 998
    assert tg[0] == 1e-4 and tg[-1] == 20.0
    assert np.all(np.diff(tg) > 0)
    np.testing.assert_allclose(np.diff(tg[:199]), 5e-5, rtol=1e-9)
    assert tg[198] == 1e-2
    tail = np.diff(tg[198:])
    assert np.all(np.diff(tail) > 0)  # geometric coarsening
    np.testing.assert_allclose(tail[1:] / tail[:-1], tail[1] / tail[0], rtol=1e-6)


def test_cache_invariants(cache):
    assert np.all(np.diff(cache.cdf_table, axis=1) >= 0)
    assert np.all(cache.cdf_table[:, -1] == 1.0)
    assert np.all(np.diff(cache.time_grid) > 0)
    assert cache.v_lo == -2.0 and cache.v_hi == 2.0 and cache.v_max == 2.0
    assert not cache.cdf_table.flags.writeable


def test_zero_drift_row_mass():
    c = sim.build_cache(1.25, (-1.0, 1.0), 3)
    exact = 1.0 - oracles.f0_tail_mass(1.25, 20.0)
    assert abs(c.row_mass[1] - exact) < 1e-9
    assert abs(c.row_mass[1] - 1.0) < 1e-6


def test_trapezoid_option_is_coarser():
    c = sim.build_cache(1.25, (-1.0, 1.0), 3, quadrature="trapezoid")
    assert abs(c.row_mass[1] - 1.0) < 1e-4


def test_rebuild_bit_identical(cache):
    again = sim.build_cache(1.25, (-2.0, 2.0), 81)
    assert np.array_equal(again.cdf_table, cache.cdf_table)


def test_tail_configuration_error():
    with pytest.raises(ConfigurationError, match="tail"):
        sim.build_cache(3.0, (-0.5, 0.5), 11, t_max=5.0)
    with pytest.raises(ConfigurationError):
        sim.build_cache(1.25, (1.0, -1.0), 11)
    with pytest.raises(ConfigurationError):
        sim.build_cache(1.25, (-1.0, 1.0), 1)


def test_tail_bound_dominates_exact_tail():
    for b in (0.8, 1.25, 1.5):
        assert sim.tail_mass_bound(b, 0.0, 20.0) >= oracles.f0_tail_mass(b, 20.0) * (1 - 1e-12)


def test_snap_nearest_ties_toward_zero(cache):
    grid = cache.drift_grid
    step = grid[1] - grid[0]
    assert cache.snap(grid[3] + 0.3 * step) == 3
    assert cache.snap(grid[3] + 0.7 * step) == 4
    mid_pos = 0.5 * (grid[40] + grid[41])  # 0 and +step
    assert grid[40] == 0.0 and cache.snap(mid_pos) == 40
    mid_neg = 0.5 * (grid[39] + grid[40])
    assert cache.snap(mid_neg) == 40


def test_sample_fpt_edges(cache):
    class Fixed:
        def __init__(self, u):
            self.u = u

        def random(self, n):
            return np.full(n, self.u)

    assert sim.sample_fpt(cache, 0.0, Fixed(0.0)) == pytest.approx(cache.time_grid[0])
    assert sim.sample_fpt(cache, 0.0, Fixed(1.0 - 1e-16)) <= 20.0
    with pytest.raises(ConfigurationError):
        sim.sample_fpt(cache, 3.0, sim.make_rng(0))


def _times(cache, v, n, seed=0):
    return sim.sample_fpt(cache, v, sim.make_rng(seed, 0, sim.STREAM_TIME), size=n)


def test_mean_fpt_zero_drift(cache):
    t = _times(cache, 0.0, 10**6)
    se = t.std() / math.sqrt(t.size)
    assert abs(t.mean() - 1.25 ** 2) < 4 * se


def test_mean_fpt_unit_drift(cache):
    t = _times(cache, 1.0, 10**6, seed=1)
    se = t.std() / math.sqrt(t.size)
    assert abs(t.mean() - 1.25 * math.tanh(1.25)) < 4 * se


@pytest.mark.parametrize("v", [0.0, 0.75, -1.5])
def test_laplace_fidelity(cache, v):
    t = _times(cache, v, 10**6, seed=2)
    for lam in (0.5, 1.0, 2.0, 5.0):
        e = np.exp(-lam * t)
        se = e.std() / math.sqrt(e.size)
        assert abs(e.mean() - series.laplace_fixed_drift(v, 1.25, lam)) < 4 * se, lam


def test_resolution_halving_changes_mean_little():
    coarse = sim.build_cache(1.25, (-1.0, 1.0), 21)
    fine = sim.build_cache(1.25, (-1.0, 1.0), 21, n_time=2 * 998 - 199)
    u = sim.make_rng(4).random(10**6)
    rows_c = np.full(u.size, coarse.snap(0.5))
    a = kernels.inverse_cdf(coarse.cdf_table, coarse.time_grid, rows_c, u)
    b = kernels.inverse_cdf(fine.cdf_table, fine.time_grid, rows_c, u)
    assert abs(a.mean() - b.mean()) < 1e-3


def test_choice_frequencies():
    rng = sim.make_rng(5)
    z = sim.sample_choice(0.0, 1.25, rng, size=10**5)
    assert abs((z == 1).mean() - 0.5) < 4 * math.sqrt(0.25 / 1e5)
    z = sim.sample_choice(0.5, 1.25, rng, size=10**5)
    p = expit(1.25)
    assert abs((z == 1).mean() - p) < 4 * math.sqrt(p * (1 - p) / 1e5)
    m = math.tanh(0.625)
    assert abs(z.mean() - m) < 4 * math.sqrt((1 - m * m) / 1e5)


def test_choice_time_independent_given_drift(cache):
    rng = sim.make_rng(6)
    z = sim.sample_choice(0.8, 1.25, rng, size=10**5)
    t = sim.sample_fpt(cache, 0.8, sim.make_rng(7), size=10**5)
    r = np.corrcoef(z, t)[0, 1]
    assert abs(r) < 4 / math.sqrt(1e5)


@pytest.mark.parametrize("v,b", [(-1.0, 1.0), (0.25, 1.25), (1.0, 1.25)])
def test_weighted_choice_unbiased(v, b):
    c = sim.build_cache(b, (-1.5, 1.5), 61)
    n = 2 * 10**5
    z = sim.sample_choice(v, b, sim.make_rng(8), size=n)
    t = sim.sample_fpt(c, v, sim.make_rng(9), size=n)
    vhat = z * series.weight_w(b, t)
    assert abs(vhat.mean() - v) < 4 * vhat.std() / math.sqrt(n)


@pytest.mark.parametrize("v", [0.0, 0.5, -1.0, 2.0])
def test_weight_conditional_mean(cache, v):
    # E[w(T) | v] = v / tanh(b v), with limit 1/b at v = 0
    b = cache.boundary
    n = 2 * 10**5
    w = series.weight_w(b, sim.sample_fpt(cache, v, sim.make_rng(21), size=n))
    target = 1 / b if v == 0 else v / math.tanh(b * v)
    assert abs(w.mean() - target) < 4 * w.std() / math.sqrt(n)


@pytest.mark.parametrize("family", ["uniform", "beta_shifted", "gaussian_truncated",
                                    "laplace_truncated"])
def test_tabular_prior_means(family):
    prior = sim.tabular_prior(family)
    x = prior.sample(sim.make_rng(10), 10**5)
    lo, hi = prior.support()
    assert np.all((x >= lo) & (x <= hi))
    assert abs(x.mean() - 0.25) < 4 * x.std() / math.sqrt(x.size)


def test_prior_shapes():
    u = sim.tabular_prior("uniform").support()
    assert u == pytest.approx((-0.25, 0.75))
    b = sim.tabular_prior("beta").support()
    assert b == pytest.approx((0.25 - 2 / 7, 1.25 - 2 / 7))
    assert sim.tabular_prior("point", 0.4).sample(sim.make_rng(0), 3).tolist() == [0.4] * 3
    with pytest.raises(ConfigurationError):
        sim.PriorSpec("cauchy", 0.0, 1.0)


@pytest.mark.parametrize("family", ["uniform", "beta_shifted", "gaussian_truncated",
                                    "laplace_truncated"])
def test_linear_prior_moments(family):
    scenario = sim.LinearScenario(family=family)
    _, thetas, _ = sim.sample_linear_dataset(scenario, 10**5, seed=11, return_latent=True)
    n = thetas.shape[0]
    for k, target in enumerate(scenario.theta_star):
        x = thetas[:, k]
        assert abs(x.mean() - target) < 4 * x.std() / math.sqrt(n)
        dev = (x - target) ** 2
        assert abs(dev.mean() - 0.25) < 4 * dev.std() / math.sqrt(n)


def test_linear_v_max():
    assert sim.LinearScenario().v_max == pytest.approx(12.8)


def test_linear_point_mass_drifts_exact():
    scenario = sim.LinearScenario(family="point_mass")
    obs, thetas, drifts = sim.sample_linear_dataset(scenario, 1000, seed=12, return_latent=True)
    np.testing.assert_array_equal(drifts, obs.features @ np.array(scenario.theta_star))


def test_tabular_dataset_prior_means():
    for family in ("uniform", "beta_shifted"):
        prior = sim.tabular_prior(family)
        _, v = sim.sample_tabular_dataset(prior, 1.25, 10**5, seed=13, return_drifts=True)
        assert abs(v.mean() - 0.25) < 4 * v.std() / math.sqrt(v.size)
    obs = sim.sample_tabular_dataset(sim.tabular_prior("point", 0.0), 1.25, 10**5, seed=14)
    assert abs((obs.choices == 1).mean() - 0.5) < 4 * math.sqrt(0.25 / 1e5)


def test_ndt_shift_is_exact():
    prior = sim.tabular_prior("uniform")
    sampler = sim.tabular_sampler(prior, 1.25)
    a = sim.sample_tabular_dataset(prior, 1.25, 500, 0.0, seed=15, sampler=sampler)
    b = sim.sample_tabular_dataset(prior, 1.25, 500, 0.3, seed=15, sampler=sampler)
    np.testing.assert_array_equal(b.times, a.times + 0.3)
    np.testing.assert_array_equal(a.choices, b.choices)


def test_reproducible_datasets():
    scenario = sim.LinearScenario()
    a = sim.sample_linear_dataset(scenario, 5000, seed=16, rep=3)
    b = sim.sample_linear_dataset(scenario, 5000, seed=16, rep=3)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.features, b.features)
    c = sim.sample_linear_dataset(scenario, 5000, seed=16, rep=4)
    assert not np.array_equal(a.times, c.times)


def test_rebuild_protocol():
    sampler = sim.FptSampler(1.25, (-1.0, 1.0), 41)
    drifts = np.array([0.1, -2.5])
    cache = sampler.cache_for(drifts)
    assert sampler.rebuilds == 1
    assert cache.v_max == pytest.approx(max(1.5 * 1.0, 1.1 * 2.5))
    assert sampler.cache_for(drifts) is cache and sampler.rebuilds == 1
    small = np.array([0.3])
    assert sampler.cache_for(small) is sampler.base
    t1 = sampler.sample_times(drifts, sim.make_rng(1))
    t2 = sim.FptSampler(1.25, (-1.0, 1.0), 41).sample_times(drifts, sim.make_rng(1))
    assert np.array_equal(t1, t2)


def test_cache_save_load_roundtrip(tmp_path, cache):
    path = tmp_path / "c.bin"
    cache.save(path)
    raw = path.read_bytes()
    assert raw[:8] == b"DDMFPT01"
    loaded = sim.FptGridCache.load(path)
    assert loaded.boundary == cache.boundary and loaded.t_max == cache.t_max
    assert np.array_equal(loaded.cdf_table, cache.cdf_table)
    assert np.array_equal(loaded.drift_grid, cache.drift_grid)
    path.write_bytes(raw[:100])
    with pytest.raises(ConfigurationError):
        sim.FptGridCache.load(path)


def test_mixed_boundary_dataset():
    prior = sim.tabular_prior("uniform")
    samplers = [sim.tabular_sampler(prior, 1.0), sim.tabular_sampler(prior, 1.5, t_max=30.0)]
    obs = sim.sample_mixed_boundary_dataset(prior, samplers, [0.5, 0.5], 2000, seed=1)
    again = sim.sample_mixed_boundary_dataset(prior, samplers, [0.5, 0.5], 2000, seed=1)
    assert np.array_equal(obs.times, again.times)
    with pytest.raises(ConfigurationError):
        sim.sample_mixed_boundary_dataset(prior, samplers, [0.3, 0.3], 10)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32), rep=st.integers(0, 1000), stream=st.integers(0, 5))
def test_rng_streams_keyed(seed, rep, stream):
    a = sim.make_rng(seed, rep, stream).random(4)
    b = sim.make_rng(seed, rep, stream).random(4)
    c = sim.make_rng(seed, rep, stream + 1).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
