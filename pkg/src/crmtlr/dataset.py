"""Survival records, the discrete time grid, and CSV/feature encoding."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MISSING_LEVEL = "<missing>"
KINDS = ("categorical", "continuous")
RESERVED_COLUMNS = ("id", "time", "event")


class DataError(ValueError):
    """Malformed input data, schema, or grid request."""


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    id: str
    time: float
    event: int
    features: np.ndarray

    def __post_init__(self):
        if not self.time >= 0:
            raise DataError(f"subject {self.id}: time must be >= 0, got {self.time}")
        if self.event < 0:
            raise DataError(f"subject {self.id}: event must be >= 0, got {self.event}")


@dataclass(frozen=True)
class TimeGrid:
    """Interval boundaries t_1 < ... < t_{K-1}; t_0 = 0 and t_K = inf are implicit.

    Interval k (1-based) is (t_{k-1}, t_k]. Time 0 is placed in interval 1.
    """

    edges: np.ndarray

    def __post_init__(self):
        edges = np.array(self.edges, dtype=np.float64).ravel()
        if edges.size == 0:
            raise DataError("a time grid needs at least one edge (K >= 2)")
        if not np.all(np.isfinite(edges)) or edges[0] <= 0 or np.any(np.diff(edges) <= 0):
            raise DataError("grid edges must be finite, positive and strictly increasing")
        edges.flags.writeable = False
        object.__setattr__(self, "edges", edges)

    @property
    def n_intervals(self) -> int:
        return self.edges.size + 1

    def bin(self, t):
        """Vectorized ``bin_time``: 1-based interval index for each time."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(np.isnan(t)):
            raise DataError("times must be non-negative")
        return np.searchsorted(self.edges, t, side="left") + 1

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash(self.edges.tobytes())


def bin_time(grid: TimeGrid, t: float) -> int:
    """Index k in 1..K with t_{k-1} < t <= t_k (t = 0 goes to interval 1)."""
    if not t >= 0:
        raise DataError(f"time must be non-negative, got {t}")
    return int(np.searchsorted(grid.edges, t, side="left")) + 1


def default_interval_count(n_train: int) -> int:
    """Square root of the training size, rounded half up, never below 2."""
    return max(2, math.floor(math.sqrt(n_train) + 0.5))


def build_grid(
    times: Sequence[float] | Iterable[SubjectRecord],
    events: Sequence[int] | None = None,
    k: int | None = None,
    spacing: str = "quantile",
) -> TimeGrid:
    """Place K-1 interval edges from the uncensored event times.

    Accepts either a list of ``SubjectRecord`` or parallel ``times``/``events``
    arrays. With ``spacing="quantile"`` the edges are the empirical quantiles
    (numpy's default linear interpolation) at levels 1/K, ..., (K-1)/K; equal
    quantiles are merged so K can shrink. ``spacing="uniform"`` splits
    (0, max event time] into K equal pieces instead.
    """
    if events is None:
        records = list(times)
        times = [r.time for r in records]
        events = [r.event for r in records]
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events)
    if k is None:
        k = default_interval_count(times.size)
    elif k < 2:
        raise DataError(f"need k >= 2 intervals, got {k}")

    observed = times[events != 0]
    if observed.size == 0:
        raise DataError("no events to place grid")

    if spacing == "quantile":
        edges = np.quantile(observed, np.arange(1, k) / k)
    elif spacing == "uniform":
        edges = np.linspace(0.0, observed.max(), k + 1)[1:-1]
    else:
        raise DataError(f"unknown grid spacing {spacing!r}")
    edges = np.unique(edges)
    edges = edges[edges > 0]
    if edges.size == 0:
        raise DataError("all event times are zero; cannot place a grid edge")
    return TimeGrid(edges)


@dataclass(frozen=True)
class Schema:
    """Feature column kinds, in file order, plus an optional declared event count."""

    columns: tuple[tuple[str, str], ...]
    n_events: int | None = None

    @classmethod
    def parse(cls, text: str, source: str = "<schema>") -> "Schema":
        columns = []
        n_events = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or not key or not value:
                raise DataError(f"{source}:{lineno}: expected 'column = kind', got {raw!r}")
            if key == "n_events":
                try:
                    n_events = int(value)
                except ValueError:
                    raise DataError(f"{source}:{lineno}: n_events must be an integer") from None
                if n_events < 1:
                    raise DataError(f"{source}:{lineno}: n_events must be >= 1")
                continue
            if value not in KINDS:
                raise DataError(f"{source}:{lineno}: kind must be one of {KINDS}, got {value!r}")
            if key in RESERVED_COLUMNS:
                raise DataError(f"{source}:{lineno}: {key!r} is reserved")
            columns.append((key, value))
        if len({name for name, _ in columns}) != len(columns):
            raise DataError(f"{source}: duplicate column declaration")
        return cls(tuple(columns), n_events)

    @classmethod
    def read(cls, path) -> "Schema":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise DataError(f"cannot read schema file {path}: {exc.strerror}") from None
        return cls.parse(text, str(path))

    def dumps(self) -> str:
        lines = [f"{name} = {kind}" for name, kind in self.columns]
        if self.n_events is not None:
            lines.append(f"n_events = {self.n_events}")
        return "\n".join(lines) + "\n"


def _is_missing(value: str) -> bool:
    return value.strip().lower() in ("", "na", "nan", "null")


@dataclass(frozen=True)
class FeatureEncoding:
    """One-hot categorical levels and z-score statistics, fitted on training rows.

    Categorical levels are sorted; a missing value is its own level when seen
    in training. Categories unseen at fit time encode to an all-zero block.
    Missing continuous values are imputed with the training mean.
    """

    columns: tuple[tuple[str, str], ...]
    levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    means: Mapping[str, float] = field(default_factory=dict)
    stds: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def fit(cls, rows: Sequence[Mapping[str, str]], schema: Schema) -> "FeatureEncoding":
        levels, means, stds = {}, {}, {}
        for name, kind in schema.columns:
            raw = [row[name] for row in rows]
            if kind == "categorical":
                levels[name] = tuple(sorted({MISSING_LEVEL if _is_missing(v) else v.strip() for v in raw}))
            else:
                values = np.array([_parse_float(v, name) for v in raw if not _is_missing(v)])
                mean = float(values.mean()) if values.size else 0.0
                std = float(values.std()) if values.size else 0.0
                means[name] = mean
                stds[name] = std if std > 0 else 1.0
        return cls(schema.columns, levels, means, stds)

    @property
    def dim(self) -> int:
        return sum(len(self.levels[name]) if kind == "categorical" else 1 for name, kind in self.columns)

    def feature_names(self) -> list[str]:
        names = []
        for name, kind in self.columns:
            if kind == "categorical":
                names.extend(f"{name}={level}" for level in self.levels[name])
            else:
                names.append(name)
        return names

    def transform(self, rows: Sequence[Mapping[str, str]]) -> np.ndarray:
        out = np.zeros((len(rows), self.dim))
        col = 0
        for name, kind in self.columns:
            if kind == "categorical":
                index = {level: i for i, level in enumerate(self.levels[name])}
                for r, row in enumerate(rows):
                    v = row[name]
                    hit = index.get(MISSING_LEVEL if _is_missing(v) else v.strip())
                    if hit is not None:
                        out[r, col + hit] = 1.0
                col += len(index)
            else:
                mean, std = self.means[name], self.stds[name]
                for r, row in enumerate(rows):
                    v = row[name]
                    x = mean if _is_missing(v) else _parse_float(v, name)
                    out[r, col] = (x - mean) / std
                col += 1
        return out

    def to_dict(self) -> dict:
        return {
            "columns": [[name, kind] for name, kind in self.columns],
            "levels": {k: list(v) for k, v in self.levels.items()},
            "means": dict(self.means),
            "stds": dict(self.stds),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureEncoding":
        columns = tuple((str(name), str(kind)) for name, kind in d["columns"])
        levels = {k: tuple(v) for k, v in d["levels"].items()}
        means = {k: float(v) for k, v in d["means"].items()}
        stds = {k: float(v) for k, v in d["stds"].items()}
        for name, kind in columns:
            if kind not in KINDS:
                raise DataError(f"encoding: unknown kind {kind!r} for column {name!r}")
            if kind == "categorical" and name not in levels:
                raise DataError(f"encoding: no levels stored for {name!r}")
            if kind == "continuous" and (name not in means or name not in stds):
                raise DataError(f"encoding: no statistics stored for {name!r}")
        return cls(columns, levels, means, stds)


def _parse_float(value: str, column: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise DataError(f"non-numeric value {value!r} in continuous column {column!r}") from None
    if not math.isfinite(x):
        raise DataError(f"non-finite value {value!r} in continuous column {column!r}")
    return x


def read_rows(path, required: Iterable[str]) -> list[dict[str, str]]:
    """Read a headered CSV into string dicts, checking required columns exist."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc.strerror}") from None
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: missing required column(s) {', '.join(missing)}")
    return rows


def parse_outcomes(rows: Sequence[Mapping[str, str]], n_events: int | None = None):
    """Extract ``(ids, times, events)`` arrays from raw rows."""
    ids, times, events = [], [], []
    for lineno, row in enumerate(rows, 2):
        try:
            t = float(row["time"])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric time {row['time']!r}") from None
        try:
            ev = int(row["event"])
        except ValueError:
            raise DataError(f"line {lineno}: event must be an integer, got {row['event']!r}") from None
        if not (t >= 0 and math.isfinite(t)):
            raise DataError(f"line {lineno}: time must be finite and >= 0, got {t}")
        if ev < 0 or (n_events is not None and ev > n_events):
            upper = "E" if n_events is None else n_events
            raise DataError(f"line {lineno}: event {ev} outside 0..{upper}")
        ids.append(row.get("id", str(lineno - 1)))
        times.append(t)
        events.append(ev)
    return ids, np.array(times, dtype=np.float64), np.array(events, dtype=np.int64)


def ingest_csv(path, schema: Schema, encoding: FeatureEncoding | None = None, n_events: int | None = None):
    """Read and encode a survival CSV.

    Fits a ``FeatureEncoding`` on the file unless one is passed in. Returns
    ``(records, encoding)``.
    """
    feature_cols = [name for name, _ in schema.columns]
    rows = read_rows(path, ["id", "time", "event", *feature_cols])
    if n_events is None:
        n_events = schema.n_events
    ids, times, events = parse_outcomes(rows, n_events)
    if encoding is None:
        encoding = FeatureEncoding.fit(rows, schema)
    X = encoding.transform(rows)
    records = [SubjectRecord(i, float(t), int(e), x) for i, t, e, x in zip(ids, times, events, X)]
    return records, encoding


@dataclass(frozen=True)
class Cohort:
    """Array view of encoded subjects: features, event codes, 1-based interval bins."""

    X: np.ndarray
    events: np.ndarray
    bins: np.ndarray
    n_events: int
    n_intervals: int

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.events.size or self.events.size != self.bins.size:
            raise DataError("cohort arrays have inconsistent lengths")
        if self.events.size and (self.events.min() < 0 or self.events.max() > self.n_events):
            raise DataError(f"event codes outside 0..{self.n_events}")
        if self.bins.size and (self.bins.min() < 1 or self.bins.max() > self.n_intervals):
            raise DataError(f"interval bins outside 1..{self.n_intervals}")

    def __len__(self):
        return self.events.size

    def subset(self, idx) -> "Cohort":
        return Cohort(self.X[idx], self.events[idx], self.bins[idx], self.n_events, self.n_intervals)

    @classmethod
    def from_arrays(cls, X, times, events, grid: TimeGrid, n_events: int | None = None) -> "Cohort":
        events = np.asarray(events, dtype=np.int64)
        if n_events is None:
            n_events = max(1, int(events.max(initial=0)))
        return cls(np.asarray(X, dtype=np.float64), events, grid.bin(times).astype(np.int64), n_events, grid.n_intervals)

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], grid: TimeGrid, n_events: int | None = None) -> "Cohort":
        X = np.array([r.features for r in records], dtype=np.float64).reshape(len(records), -1)
        return cls.from_arrays(X, [r.time for r in records], [r.event for r in records], grid, n_events)

    @classmethod
    def from_tuples(cls, rows: Sequence[tuple], n_events: int, n_intervals: int) -> "Cohort":
        """Build from ``(x, event, bin)`` triples."""
        X = np.array([np.asarray(x, dtype=np.float64) for x, _, _ in rows])
        events = np.array([e for _, e, _ in rows], dtype=np.int64)
        bins = np.array([b for _, _, b in rows], dtype=np.int64)
        return cls(X.reshape(len(rows), -1), events, bins, n_events, n_intervals)
