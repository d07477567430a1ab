"""Ingestion of real choice / response-time tables and subject-level targets.

CSV dialect: comma separated, UTF-8, header row required, RFC 4180 quoting.
Response times are in seconds unless ``ColumnMap.rt_scale`` converts them.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .drift import bt_logistic
from .errors import DomainError, EmptyTargetError, RowErrorLimit, SchemaError
from .observations import Observations
from .simulator import STREAM_SUBSAMPLE, make_rng

LARGER_LATER_DEFAULT = 10.0
AMOUNT_SCALE = 9.5
DELAY_SCALE = 365.0
TARGET_L2_PENALTY = 0.1


@dataclass(frozen=True)
class TrialRecord:
    subject_id: str
    smaller_sooner: float
    larger_later: float
    delay_days: float
    choice: int
    response_time: float

    def __post_init__(self):
        if self.choice not in (1, -1):
            raise ValueError(f"choice must be +1 or -1, got {self.choice!r}")
        if not self.response_time > 0:
            raise ValueError(f"response time must be positive, got {self.response_time!r}")


@dataclass(frozen=True)
class ColumnMap:
    """Names of the input columns and the encodings applied to them.

    ``choice_encoding`` is ``"sign"`` for +1/-1 or ``"binary"`` for 1/0, with
    1 meaning larger-later.  ``rt_scale`` multiplies raw times (0.001 for
    milliseconds).
    """

    subject_id: str = "subject_id"
    smaller_sooner: str = "smaller_sooner"
    larger_later: str = "larger_later"
    delay_days: str = "delay_days"
    choice: str = "choice"
    response_time: str = "response_time"
    choice_encoding: str = "sign"
    rt_scale: float = 1.0

    def __post_init__(self):
        if self.choice_encoding not in ("sign", "binary"):
            raise ValueError(f"unknown choice encoding {self.choice_encoding!r}")
        if not self.rt_scale > 0:
            raise ValueError("rt_scale must be positive")

    @property
    def required(self):
        return (self.subject_id, self.smaller_sooner, self.larger_later, self.delay_days,
                self.choice, self.response_time)


@dataclass
class ParseResult:
    records: list
    n_rows: int
    n_dropped: int
    row_errors: list = field(default_factory=list)

    @property
    def n_retained(self):
        return len(self.records)


def _decode_choice(raw, encoding):
    value = float(raw)
    if encoding == "binary":
        if value == 1.0:
            return 1
        if value == 0.0:
            return -1
    elif value in (1.0, -1.0):
        return int(value)
    raise ValueError(f"invalid choice value {raw!r} for {encoding} encoding")


def parse_trials(stream, column_map=None, max_row_errors=100):
    """Read trial records from a CSV text stream.

    Rows with an empty choice or response time are dropped and counted.
    Rows with unparseable values are recorded in ``row_errors`` as
    ``(line_number, message)``; more than ``max_row_errors`` of them raises
    ``RowErrorLimit``.
    """
    cm = column_map or ColumnMap()
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise SchemaError("input has no header row")
    missing = [c for c in cm.required if c not in reader.fieldnames]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    records, errors = [], []
    n_rows = n_dropped = 0
    for row in reader:
        n_rows += 1
        line = reader.line_num
        z_raw = (row[cm.choice] or "").strip()
        t_raw = (row[cm.response_time] or "").strip()
        if not z_raw or not t_raw or z_raw.lower() == "nan" or t_raw.lower() == "nan":
            n_dropped += 1
            continue
        try:
            rt = float(t_raw) * cm.rt_scale
            if not (math.isfinite(rt) and rt > 0):
                raise ValueError(f"response time must be positive, got {t_raw!r}")
            rec = TrialRecord(
                subject_id=row[cm.subject_id],
                smaller_sooner=float(row[cm.smaller_sooner]),
                larger_later=float(row[cm.larger_later]),
                delay_days=float(row[cm.delay_days]),
                choice=_decode_choice(z_raw, cm.choice_encoding),
                response_time=rt,
            )
        except (TypeError, ValueError) as exc:
            errors.append((line, str(exc)))
            if len(errors) > max_row_errors:
                raise RowErrorLimit(
                    f"more than {max_row_errors} malformed rows (last at line {line}: {exc})",
                    errors) from exc
            continue
        records.append(rec)
    return ParseResult(records, n_rows, n_dropped, errors)


def write_trials(records, stream, column_map=None):
    """Serialize records in the layout ``parse_trials`` reads back."""
    cm = column_map or ColumnMap()
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(cm.required)
    for r in records:
        z = r.choice if cm.choice_encoding == "sign" else (1 if r.choice == 1 else 0)
        writer.writerow([r.subject_id, repr(r.smaller_sooner), repr(r.larger_later),
                         repr(r.delay_days), z, repr(r.response_time / cm.rt_scale)])


def read_trials_file(path, column_map=None, max_row_errors=100):
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_trials(fh, column_map, max_row_errors)


def encode_features(record):
    """``((l_r - s_r) / 9.5, -l_d / 365)``; the sooner option is paid today."""
    return np.array([(record.larger_later - record.smaller_sooner) / AMOUNT_SCALE,
                     -record.delay_days / DELAY_SCALE])


def records_to_observations(records):
    records = list(records)
    if not records:
        raise ValueError("no records")
    z = np.array([r.choice for r in records])
    t = np.array([r.response_time for r in records], dtype=np.float64)
    psi = np.array([encode_features(r) for r in records])
    return Observations(z, t, psi)


@dataclass(frozen=True)
class SubjectTarget:
    theta_star: np.ndarray
    subjects_used: int
    subjects_dropped: int
    dropped_ids: tuple = ()

    def report(self):
        theta = ", ".join(f"{x:.10g}" for x in self.theta_star)
        lines = [f"theta_star: [{theta}]",
                 f"subjects_used: {self.subjects_used}",
                 f"subjects_dropped: {self.subjects_dropped}"]
        if self.dropped_ids:
            lines.append("dropped_ids: " + ", ".join(self.dropped_ids))
        return "\n".join(lines)


def _trial_key(r):
    return (r.smaller_sooner, r.larger_later, r.delay_days, r.choice, r.response_time)


def subject_target(records, l2_penalty=TARGET_L2_PENALTY):
    """Average of per-subject penalized logistic fits at calibration boundary 1.

    Subjects whose trials contain one choice class are dropped.  Subjects and
    their trials are put in canonical order first, so the result does not
    depend on input order.
    """
    groups = {}
    for r in records:
        groups.setdefault(r.subject_id, []).append(r)
    if not groups:
        raise ValueError("no records")
    fits, dropped = [], []
    for sid in sorted(groups):
        trials = sorted(groups[sid], key=_trial_key)
        if len({r.choice for r in trials}) < 2:
            dropped.append(sid)
            continue
        fits.append(bt_logistic(records_to_observations(trials), 1.0, l2_penalty).estimate)
    if not fits:
        raise EmptyTargetError("every subject was dropped (single choice class)")
    theta = np.mean(np.array(fits), axis=0)
    return SubjectTarget(theta, len(fits), len(dropped), tuple(dropped))


def subsample(obs, n, seed, rep=0, context=()):
    """``n`` draws with replacement."""
    n = int(n)
    if n < 1:
        raise ValueError("subsample size must be positive")
    if len(obs) == 0:
        raise ValueError("cannot subsample empty observations")
    idx = make_rng(seed, rep, STREAM_SUBSAMPLE, *context).integers(0, len(obs), n)
    return obs.take(idx)


def cosine_similarity(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("vectors must have the same dimension")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def observations_to_csv(obs, stream):
    """Write ``choice,time[,x0..]`` rows with round-trip float formatting."""
    writer = csv.writer(stream, lineterminator="\n")
    d = obs.dim or 0
    writer.writerow(["choice", "time"] + [f"x{k}" for k in range(d)])
    for i in range(len(obs)):
        row = [int(obs.choices[i]), repr(float(obs.times[i]))]
        if d:
            row += [repr(float(x)) for x in obs.features[i]]
        writer.writerow(row)


def observations_from_csv(stream):
    """Read the layout written by ``observations_to_csv``.

    A file with only a ``time`` column is accepted for boundary estimation;
    its choices are set to +1.
    """
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise SchemaError("input has no header row")
    header = [h.strip() for h in header]
    if "time" not in header:
        raise SchemaError("missing required column: time")
    it = header.index("time")
    iz = header.index("choice") if "choice" in header else None
    ix = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    z, t, x = [], [], []
    for row in reader:
        if not row:
            continue
        t.append(float(row[it]))
        z.append(int(float(row[iz])) if iz is not None else 1)
        if ix:
            x.append([float(row[i]) for i in ix])
    return Observations(np.array(z), np.array(t), np.array(x) if ix else None)


def read_observations_file(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return observations_from_csv(fh)


def write_observations_file(obs, path):
    buf = io.StringIO()
    observations_to_csv(obs, buf)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
