"""Containers for choice / response-time data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Observation(NamedTuple):
    """One anonymous labeler's record."""

    choice: int
    time: float
    features: tuple | None = None


@dataclass(frozen=True, eq=False)
class Observations:
    """Column-oriented batch of observations.

    ``choices`` holds +1/-1, ``times`` strictly positive seconds and
    ``features`` an optional ``(n, d)`` array of comparison features.
    """

    choices: np.ndarray
    times: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self):
        z = np.asarray(self.choices)
        t = np.ascontiguousarray(self.times, dtype=np.float64).ravel()
        if z.shape != t.shape:
            raise ValueError("choices and times must have the same length")
        if not np.all((z == 1) | (z == -1)):
            raise ValueError("choices must be +1 or -1")
        if not (np.all(np.isfinite(t)) and np.all(t > 0.0)):
            raise ValueError("response times must be finite and strictly positive")
        object.__setattr__(self, "choices", z.astype(np.int8))
        object.__setattr__(self, "times", t)
        if self.features is not None:
            x = np.ascontiguousarray(self.features, dtype=np.float64)
            if x.ndim == 1:
                x = x[:, None]
            if x.ndim != 2 or x.shape[0] != t.size:
                raise ValueError("features must be an (n, d) array")
            object.__setattr__(self, "features", x)

    def __len__(self):
        return self.times.size

    def __getitem__(self, i):
        feats = None if self.features is None else tuple(self.features[i].tolist())
        return Observation(int(self.choices[i]), float(self.times[i]), feats)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self):
        return None if self.features is None else self.features.shape[1]

    def take(self, index):
        index = np.asarray(index)
        feats = None if self.features is None else self.features[index]
        return Observations(self.choices[index], self.times[index], feats)

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records:
            raise ValueError("no observations")
        z = np.array([r.choice for r in records])
        t = np.array([r.time for r in records], dtype=np.float64)
        if all(r.features is None for r in records):
            return cls(z, t)
        if any(r.features is None for r in records):
            raise ValueError("either all or none of the records carry features")
        dims = {len(r.features) for r in records}
        if len(dims) != 1:
            raise ValueError(f"inconsistent feature dimensions {sorted(dims)}")
        return cls(z, t, np.array([r.features for r in records], dtype=np.float64))
