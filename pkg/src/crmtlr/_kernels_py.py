"""Pure numpy implementations of the hot loops.

Each function here has a compiled twin in ``_kernels.pyx`` with the same
signature and semantics; ``crmtlr.kernels`` picks one at import time.
"""
import numpy as np

_CHUNK = 512


def mtlr_nll_grad(logits, events, bins):
    """Per-subject negative log-likelihood of competing-risks MTLR.

    Parameters
    ----------
    logits : (N, E, K-1) float64
        Per-interval linear outputs ``theta_{e,k} . x + b_{e,k}``.
    events : (N,) int64
        0 for censored, otherwise the event index 1..E.
    bins : (N,) int64
        Zero-based interval index 0..K-1 of the observed time.

    Returns
    -------
    nll : (N,) float64
    grad : (N, E, K-1) float64
        Gradient of each subject's nll with respect to its own logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    events = np.asarray(events, dtype=np.int64)
    bins = np.asarray(bins, dtype=np.int64)
    n, n_events, km1 = logits.shape
    k = km1 + 1

    scores = np.zeros((n, n_events, k))
    scores[:, :, :km1] = np.cumsum(logits[:, :, ::-1], axis=2)[:, :, ::-1]

    flat = scores.reshape(n, -1)
    top = flat.max(axis=1)
    log_z = top + np.log(np.exp(flat - top[:, None]).sum(axis=1))
    probs = np.exp(scores - log_z[:, None, None])

    target = np.zeros_like(scores)
    observed = np.empty(n)
    rows = np.arange(n)

    hit = events > 0
    if hit.any():
        r = rows[hit]
        target[r, events[hit] - 1, bins[hit]] = 1.0
        observed[hit] = scores[r, events[hit] - 1, bins[hit]]

    cens = ~hit
    if cens.any():
        s = scores[cens]
        keep = np.arange(k)[None, None, :] >= bins[cens][:, None, None]
        masked = np.where(keep, s, -np.inf).reshape(s.shape[0], -1)
        mtop = masked.max(axis=1)
        log_m = mtop + np.log(np.exp(masked - mtop[:, None]).sum(axis=1))
        target[cens] = np.where(keep, np.exp(s - log_m[:, None, None]), 0.0)
        observed[cens] = log_m

    nll = log_z - observed
    grad = np.cumsum(probs - target, axis=2)[:, :, :km1]
    return nll, grad


def cindex_counts(scores, times, events, event):
    """Harrell pair counts for one cause.

    A pair (i, j) is comparable when ``events[i] == event`` and
    ``times[i] < times[j]``; it earns 1 if ``scores[i] > scores[j]`` and 0.5
    on a tie. Returns ``(credit, n_comparable)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    idx = np.flatnonzero(np.asarray(events) == event)
    credit = 0.0
    pairs = 0
    for start in range(0, idx.size, _CHUNK):
        i = idx[start:start + _CHUNK]
        later = times[None, :] > times[i, None]
        si = scores[i, None]
        credit += np.count_nonzero(later & (scores[None, :] < si))
        credit += 0.5 * np.count_nonzero(later & (scores[None, :] == si))
        pairs += int(np.count_nonzero(later))
    return float(credit), pairs


def auroc_counts(pos_scores, neg_scores):
    """Mann-Whitney credit: sum over (pos, neg) pairs of 1{pos > neg} + 0.5 * 1{tie}."""
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64))
    pos = np.asarray(pos_scores, dtype=np.float64)
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    return float(below.sum() + 0.5 * (upto - below).sum())
