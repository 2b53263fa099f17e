"""Synthetic competing-risks cohorts with exponential cause-specific hazards.

With constant hazards ``lam_e(x) = exp(beta_e . x + b_e + g_e * x_1 * x_2)``
the cumulative incidence has the closed form

    CIF_e(t | x) = lam_e / Lam * (1 - exp(-Lam * t)),   Lam = sum_e lam_e,

which is what the trained models are checked against.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Schema, SubjectRecord
from .metrics import cause_specific_cindex


@dataclass(frozen=True)
class HazardSpec:
    coefs: np.ndarray  # (E, d)
    intercepts: np.ndarray  # (E,)
    censor_rate: float = 0.0
    t_max: float = np.inf
    interaction: np.ndarray | None = field(default=None)  # (E,) weight on x_1 * x_2

    def __post_init__(self):
        coefs = np.atleast_2d(np.asarray(self.coefs, dtype=np.float64))
        intercepts = np.asarray(self.intercepts, dtype=np.float64).ravel()
        if intercepts.shape != (coefs.shape[0],):
            raise ValueError("need one intercept per event")
        if self.censor_rate < 0 or not self.t_max > 0:
            raise ValueError("censor_rate must be >= 0 and t_max > 0")
        inter = np.zeros(coefs.shape[0]) if self.interaction is None else np.asarray(self.interaction, dtype=np.float64)
        if inter.shape != intercepts.shape:
            raise ValueError("need one interaction weight per event")
        if np.any(inter != 0) and coefs.shape[1] < 2:
            raise ValueError("the x1*x2 interaction needs d >= 2")
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "intercepts", intercepts)
        object.__setattr__(self, "interaction", inter)

    @property
    def n_events(self) -> int:
        return self.coefs.shape[0]

    @property
    def dim(self) -> int:
        return self.coefs.shape[1]

    def rates(self, X) -> np.ndarray:
        """Cause-specific hazards, shape ``(N, E)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        eta = X @ self.coefs.T + self.intercepts
        if np.any(self.interaction):
            eta = eta + np.outer(X[:, 0] * X[:, 1], self.interaction)
        return np.exp(eta)

    def to_dict(self) -> dict:
        return {
            "coefs": self.coefs.tolist(),
            "intercepts": self.intercepts.tolist(),
            "censor_rate": self.censor_rate,
            "t_max": None if np.isinf(self.t_max) else self.t_max,
            "interaction": self.interaction.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HazardSpec":
        t_max = d.get("t_max")
        return cls(
            np.array(d["coefs"], dtype=np.float64),
            np.array(d["intercepts"], dtype=np.float64),
            float(d.get("censor_rate", 0.0)),
            np.inf if t_max is None else float(t_max),
            d.get("interaction"),
        )


def generate(spec: HazardSpec, n: int, seed=None, x=None) -> list[SubjectRecord]:
    """Draw ``n`` subjects; ``x`` pins every subject to the same covariates.

    For parallel generation derive one child seed per chunk from a root
    ``np.random.SeedSequence(seed).spawn(n_chunks)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if x is None:
        X = rng.standard_normal((n, spec.dim))
    else:
        X = np.tile(np.asarray(x, dtype=np.float64).reshape(1, spec.dim), (n, 1))
    rates = spec.rates(X)
    latent = rng.exponential(1.0, size=rates.shape) / rates
    if spec.censor_rate > 0:
        censor = rng.exponential(1.0 / spec.censor_rate, size=n)
    else:
        censor = np.full(n, np.inf)
    censor = np.minimum(censor, spec.t_max)

    first = latent.argmin(axis=1)
    t_event = latent[np.arange(n), first]
    censored = censor < t_event
    times = np.where(censored, censor, t_event)
    events = np.where(censored, 0, first + 1)
    return [SubjectRecord(f"s{j}", float(times[j]), int(events[j]), X[j]) for j in range(n)]


def as_arrays(records: Sequence[SubjectRecord]):
    """``(X, times, events)`` arrays from a list of records."""
    X = np.array([r.features for r in records], dtype=np.float64).reshape(len(records), -1)
    times = np.array([r.time for r in records], dtype=np.float64)
    events = np.array([r.event for r in records], dtype=np.int64)
    return X, times, events


def oracle_cif(spec: HazardSpec, x, t, e: int):
    """True CIF of event ``e`` (1-based) at time(s) ``t`` for covariates ``x``.

    Broadcasts over rows of ``x`` and over ``t``.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    rates = spec.rates(x)
    total = rates.sum(axis=1)
    share = rates[:, e - 1] / total
    out = share * -np.expm1(-total * t) if t.ndim == 0 else share[:, None] * -np.expm1(-np.outer(total, t))
    if np.ndim(x) == 1:
        out = out[0]
    return out.item() if np.ndim(out) == 0 else out


def oracle_risk(spec: HazardSpec, X, e: int) -> np.ndarray:
    """Ranking score from the true model: event ``e``'s share of the total hazard."""
    rates = spec.rates(X)
    return rates[:, e - 1] / rates.sum(axis=1)


def oracle_cindex(spec: HazardSpec, cohort: Sequence[SubjectRecord], e: int) -> float:
    X, times, events = as_arrays(cohort)
    return cause_specific_cindex(oracle_risk(spec, X, e), times, events, e)


def aalen_johansen(times, events, e: int, t_eval):
    """Nonparametric CIF estimate for event ``e`` at each time in ``t_eval``."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events)
    order = np.argsort(times, kind="stable")
    times, events = times[order], events[order]
    uniq, first = np.unique(times, return_index=True)
    at_risk = times.size - first
    any_event = np.add.reduceat((events != 0).astype(float), first)
    this_event = np.add.reduceat((events == e).astype(float), first)
    surv_before = np.concatenate([[1.0], np.cumprod(1.0 - any_event / at_risk)[:-1]])
    cif = np.cumsum(surv_before * this_event / at_risk)
    idx = np.searchsorted(uniq, np.asarray(t_eval, dtype=np.float64), side="right")
    return np.where(idx > 0, cif[np.maximum(idx - 1, 0)], 0.0)


def schema_for(spec: HazardSpec) -> Schema:
    return Schema(tuple((f"x{i + 1}", "continuous") for i in range(spec.dim)), spec.n_events)


def cohort_csv(records: Sequence[SubjectRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    d = records[0].features.size if records else 0
    writer.writerow(["id", "time", "event", *(f"x{i + 1}" for i in range(d))])
    for r in records:
        writer.writerow([r.id, repr(r.time), r.event, *(repr(float(v)) for v in r.features)])
    return buf.getvalue()


def sidecar(spec: HazardSpec, n: int, seed) -> str:
    return json.dumps({"spec": spec.to_dict(), "n": n, "seed": seed}, indent=1, sort_keys=True) + "\n"


def sidecar_paths(path) -> tuple[Path, Path]:
    """Schema and parameter files written next to a generated CSV."""
    path = Path(path)
    return path.with_suffix(".schema"), path.with_suffix(".spec.json")
