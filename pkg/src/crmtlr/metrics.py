"""Cause-specific concordance and horizon AUROC for competing-risks predictions."""
from __future__ import annotations

import numpy as np

from . import kernels


class UndefinedMetric(ValueError):
    """The metric has no comparable pairs (or only one class) on this data."""


def lifetime_risk(cif_curves) -> np.ndarray:
    """Sum of each event's CIF over all K grid points; ``(N, E, K) -> (N, E)``."""
    return np.asarray(cif_curves, dtype=np.float64).sum(axis=-1)


def cause_specific_cindex(scores, times, events, event: int) -> float:
    """Harrell's C for one cause.

    Subject i with ``events[i] == event`` is compared with every j observed
    strictly later (censored, competing or same event alike). Ties in score
    earn half credit.
    """
    scores, times, events = _check(scores, times, events)
    credit, pairs = kernels.cindex_counts(scores, times, events, int(event))
    if pairs == 0:
        raise UndefinedMetric(f"undefined C-index: no comparable pairs for event {event}")
    return credit / pairs


def horizon_labels(times, events, event: int, tau: float, exclude_censored: bool = False):
    """Positive/negative masks for ``1{T <= tau and E = event}``.

    Everyone else is negative unless ``exclude_censored`` drops subjects
    censored before ``tau`` (their status at tau is unknown).
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events)
    pos = (times <= tau) & (events == event)
    neg = ~pos
    if exclude_censored:
        neg &= ~((events == 0) & (times < tau))
    return pos, neg


def horizon_auroc(cif_at_tau, times, events, event: int, tau: float, exclude_censored: bool = False) -> float:
    """Mann-Whitney AUROC of CIF(tau) against ``1{T <= tau and E = event}``."""
    scores, times, events = _check(cif_at_tau, times, events)
    pos, neg = horizon_labels(times, events, event, tau, exclude_censored)
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric(f"AUROC undefined: {n_pos} positives and {n_neg} negatives for event {event} at {tau}")
    return kernels.auroc_counts(scores[pos], scores[neg]) / (n_pos * n_neg)


def _check(scores, times, events):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    times = np.asarray(times, dtype=np.float64).ravel()
    events = np.asarray(events, dtype=np.int64).ravel()
    if not scores.size == times.size == events.size:
        raise ValueError("scores, times and events must have equal length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores, times, events
