"""Simulator-generated pseudo-real trial tables in the ingest CSV schema."""

import io

import numpy as np

from ddmpref import simulator as sim
from ddmpref.data import ColumnMap, TrialRecord, write_trials

SOONER = np.arange(0.5, 10.0, 1.0)
DELAYS = np.array([1.0, 7.0, 30.0, 90.0, 180.0, 365.0])
BASE_ANGLE = float(np.arctan2(1.5, 2.0))


def pseudo_real_records(n_subjects=40, trials=300, boundary=1.25, scale=(1.0, 5.0),
                        angle=0.6, seed=0, degenerate=True):
    """Trials for heterogeneous subjects ``theta_s = r_s (cos a_s, sin a_s)``.

    ``r_s ~ U[scale]`` and ``a_s`` is uniform within ``angle`` radians of a
    common direction.  With ``degenerate`` one extra subject always picks
    larger-later and is expected to be dropped.
    """
    rng = np.random.default_rng(seed)
    r = rng.uniform(scale[0], scale[1], n_subjects)
    a = BASE_ANGLE + rng.uniform(-angle, angle, n_subjects)
    thetas = np.column_stack([r * np.cos(a), r * np.sin(a)])
    sampler = sim.FptSampler(boundary, (-8.0, 8.0), 321)
    records = []
    for s, theta in enumerate(thetas):
        sr = rng.choice(SOONER, trials)
        ld = rng.choice(DELAYS, trials)
        psi = np.column_stack([(10.0 - sr) / 9.5, -ld / 365.0])
        v = psi @ theta
        z = sim.sample_choice(v, boundary, rng)
        t = sampler.sample_times(v, rng)
        records += [TrialRecord(f"s{s:03d}", float(x), 10.0, float(d), int(c), float(rt))
                    for x, d, c, rt in zip(sr, ld, z, t)]
    if degenerate:
        records += [TrialRecord("zz_always_later", 5.5, 10.0, 30.0, 1, 0.8 + 0.01 * k)
                    for k in range(20)]
    return records, thetas


def pseudo_real_csv(path=None, column_map=None, **kwargs):
    records, thetas = pseudo_real_records(**kwargs)
    buf = io.StringIO()
    write_trials(records, buf, column_map or ColumnMap())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text, records, thetas
