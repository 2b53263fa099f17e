"""Competing-risks multi-task logistic regression.

For each event e and interval k < K the head computes a linear output
``a[e, k] = theta[e, k] . x + b[e, k]``. The outcome "event e in interval i"
gets the suffix score ``s[e, i] = a[e, i] + ... + a[e, K-1]`` (zero for i = K),
and the joint distribution over all E*K (event, interval) cells is the softmax
of those scores. A censored subject with censoring bin j contributes the mass
of every cell whose interval index is >= j.

Indices in this module's public functions are 1-based (events 1..E, intervals
1..K) to line up with the time grid; arrays are of course 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .dataset import Cohort, TimeGrid


def logsumexp(x, axis=None):
    """Max-shifted log(sum(exp(x))) along ``axis``."""
    x = np.asarray(x, dtype=np.float64)
    top = np.max(x, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    out = np.log(np.sum(np.exp(x - top), axis=axis, keepdims=True)) + top
    return out.item() if axis is None else np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class MtlrHead:
    """Per-event interval weights ``(E, K-1, d)`` and biases ``(E, K-1)``."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 3 or b.shape != w.shape[:2]:
            raise ValueError(f"head weights {w.shape} and biases {b.shape} do not line up")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("head needs E >= 1 and K >= 2")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("head parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @classmethod
    def zeros(cls, n_events: int, n_intervals: int, input_dim: int) -> "MtlrHead":
        return cls(np.zeros((n_events, n_intervals - 1, input_dim)), np.zeros((n_events, n_intervals - 1)))

    @classmethod
    def random(cls, n_events, n_intervals, input_dim, rng, scale=1.0) -> "MtlrHead":
        return cls(
            scale * rng.standard_normal((n_events, n_intervals - 1, input_dim)),
            scale * rng.standard_normal((n_events, n_intervals - 1)),
        )

    @property
    def n_events(self) -> int:
        return self.weights.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.weights.shape[1] + 1

    @property
    def input_dim(self) -> int:
        return self.weights.shape[2]

    def logits(self, X) -> np.ndarray:
        """Linear outputs, shape ``(N, E, K-1)`` for ``X`` of shape ``(N, d)``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"expected inputs of width {self.input_dim}, got shape {X.shape}")
        return np.einsum("nd,ekd->nek", X, self.weights) + self.biases

    def scores(self, X) -> np.ndarray:
        """Cell scores, shape ``(N, E, K)``; the last interval scores 0."""
        a = self.logits(X)
        s = np.zeros(a.shape[:2] + (self.n_intervals,))
        s[:, :, :-1] = np.cumsum(a[:, :, ::-1], axis=2)[:, :, ::-1]
        return s


class HeadGradient(NamedTuple):
    weights: np.ndarray
    biases: np.ndarray


@dataclass(frozen=True)
class PredictionGrid:
    """Joint probabilities ``probs[e-1, k-1] = P(event e, interval k)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("prediction grid must be an E x K matrix")
        if np.any(p < 0) or np.any(p > 1 + 1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("prediction grid is not a probability distribution")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class CifCurve:
    """``values[e-1, k-1]`` is the cumulative incidence of event e at edge t_k."""

    values: np.ndarray


def _single(head: MtlrHead, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (head.input_dim,):
        raise ValueError(f"expected a {head.input_dim}-vector, got shape {x.shape}")
    return head.scores(x[None, :])[0]


def cell_score(head: MtlrHead, x, e: int, i: int) -> float:
    if not 1 <= e <= head.n_events:
        raise ValueError(f"event {e} outside 1..{head.n_events}")
    if not 1 <= i <= head.n_intervals:
        raise ValueError(f"interval {i} outside 1..{head.n_intervals}")
    return float(_single(head, x)[e - 1, i - 1])


def log_partition(head: MtlrHead, x) -> float:
    return logsumexp(_single(head, x))


def pmf_from_scores(scores) -> np.ndarray:
    """Softmax over the trailing (event, interval) axes of a score array."""
    s = np.asarray(scores, dtype=np.float64)
    lead = s.shape[:-2]
    flat = s.reshape(lead + (-1,))
    log_z = logsumexp(flat, axis=-1) if lead else logsumexp(flat)
    return np.exp(s - np.asarray(log_z)[..., None, None])


def joint_pmf(head: MtlrHead, x) -> PredictionGrid:
    return PredictionGrid(pmf_from_scores(_single(head, x)))


def cif(grid: PredictionGrid) -> CifCurve:
    return CifCurve(np.cumsum(grid.probs, axis=-1))


def cif_at(curve: CifCurve, grid: TimeGrid, tau: float) -> np.ndarray:
    """Step-function CIF at ``tau``: mass of every interval whose right edge is <= tau."""
    if not tau >= 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    passed = int(np.searchsorted(grid.edges, tau, side="right"))
    values = np.asarray(curve.values)
    if passed == 0:
        return np.zeros(values.shape[:-1])
    return values[..., passed - 1].copy()


def censored_log_marginal(head: MtlrHead, x, j: int) -> float:
    if not 1 <= j <= head.n_intervals:
        raise ValueError(f"censoring bin {j} outside 1..{head.n_intervals}")
    s = _single(head, x)
    return logsumexp(s[:, j - 1:]) - logsumexp(s)


def predict_pmf(head: MtlrHead, X) -> np.ndarray:
    """Joint PMFs for a batch, shape ``(N, E, K)``."""
    return pmf_from_scores(head.scores(X))


def predict_cif(head: MtlrHead, X) -> np.ndarray:
    """CIF curves at t_1..t_K for a batch, shape ``(N, E, K)``."""
    return np.cumsum(predict_pmf(head, X), axis=2)


def _as_cohort(head: MtlrHead, cohort) -> Cohort:
    if isinstance(cohort, Cohort):
        return cohort
    return Cohort.from_tuples(list(cohort), head.n_events, head.n_intervals)


def subject_nll(head: MtlrHead, X, events, bins):
    """Per-subject negative log-likelihood and its gradient w.r.t. the logits."""
    events = np.asarray(events, dtype=np.int64)
    bins = np.asarray(bins, dtype=np.int64)
    if events.size and events.max() > head.n_events:
        raise ValueError(f"event codes exceed the head's {head.n_events} events")
    return kernels.mtlr_nll_grad(head.logits(X), events, bins - 1)


def log_likelihood(head: MtlrHead, cohort: Cohort | Sequence[tuple]) -> float:
    """Summed log-likelihood over a cohort of ``(x, event, bin)`` subjects."""
    c = _as_cohort(head, cohort)
    nll, _ = subject_nll(head, c.X, c.events, c.bins)
    return -float(nll.sum())


def penalty(weights: np.ndarray, kind: str = "ridge"):
    """Quadratic weight penalty (without the c/2 factor) and its gradient.

    ``ridge`` is the plain squared norm; ``difference`` penalizes changes
    between neighbouring intervals, ``sum ||theta[e, k+1] - theta[e, k]||^2``.
    """
    if kind == "ridge":
        return float(np.sum(weights * weights)), 2.0 * weights
    if kind == "difference":
        diff = np.diff(weights, axis=1)
        grad = np.zeros_like(weights)
        grad[:, 1:] += 2.0 * diff
        grad[:, :-1] -= 2.0 * diff
        return float(np.sum(diff * diff)), grad
    raise ValueError(f"unknown penalty {kind!r}")


def head_objective(head: MtlrHead, X, events, bins, c1: float = 0.0, penalty_kind: str = "ridge"):
    """Mean NLL plus (c1/2) * penalty, with gradients for the head and the inputs.

    Returns ``(loss, HeadGradient, dX)``.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty cohort")
    nll, g = subject_nll(head, X, events, bins)
    g /= n
    d_weights = np.einsum("nek,nd->ekd", g, X)
    d_biases = g.sum(axis=0)
    d_inputs = np.einsum("nek,ekd->nd", g, head.weights)
    loss = float(nll.mean())
    if c1:
        value, grad = penalty(head.weights, penalty_kind)
        loss += 0.5 * c1 * value
        d_weights += 0.5 * c1 * grad
    return loss, HeadGradient(d_weights, d_biases), d_inputs


def loss_and_gradient(head: MtlrHead, cohort: Cohort | Sequence[tuple], c1: float = 0.0, penalty_kind: str = "ridge"):
    if c1 < 0:
        raise ValueError("c1 must be non-negative")
    c = _as_cohort(head, cohort)
    loss, grad, _ = head_objective(head, c.X, c.events, c.bins, c1, penalty_kind)
    return loss, grad
