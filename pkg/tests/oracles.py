"""Independent reference computations used as test oracles.

Everything here is written with explicit loops over cells, pairs or
configurations and shares no code with the package.
"""
import math

import numpy as np


def cell_scores_loop(W, b, x):
    """s[e][i] = sum_{k >= i} (W[e, k] . x + b[e, k]) over 0-based i, with s[e][K-1] = 0."""
    n_events, km1 = b.shape
    out = []
    for e in range(n_events):
        row = []
        for i in range(km1 + 1):
            total = 0.0
            for k in range(i, km1):
                total += sum(W[e, k, j] * x[j] for j in range(len(x))) + b[e, k]
            row.append(total)
        out.append(row)
    return out


def enumerate_subject(W, b, x, event, bin_):
    """Return (log Z, pmf[E][K], log-likelihood) by summing exp over every cell."""
    s = cell_scores_loop(W, b, x)
    n_events, k = len(s), len(s[0])
    z = sum(math.exp(s[e][i]) for e in range(n_events) for i in range(k))
    pmf = [[math.exp(s[e][i]) / z for i in range(k)] for e in range(n_events)]
    if event > 0:
        ll = s[event - 1][bin_ - 1] - math.log(z)
    else:
        tail = sum(math.exp(s[e][i]) for e in range(n_events) for i in range(bin_ - 1, k))
        ll = math.log(tail) - math.log(z)
    return math.log(z), pmf, ll


def single_event_mtlr(theta, bias, edges, x, time, observed):
    """Single-event MTLR via explicit status sequences y.

    Configuration m (m = 1..K) is y_k = 1{k >= m} for k = 1..K-1, i.e. "dead by
    t_k". Its score is sum_k (theta_k . x + b_k) y_k. An observed event at
    ``time`` selects the configuration of the interval containing it; a
    censored subject keeps every configuration whose interval ends at or
    after the censoring time (t_K = inf included).

    Returns (pmf over K intervals, log-likelihood of this subject).
    """
    km1 = len(bias)
    ends = list(edges) + [math.inf]
    a = [float(np.dot(theta[k], x)) + bias[k] for k in range(km1)]
    configs = [[1 if k >= m else 0 for k in range(km1)] for m in range(km1 + 1)]
    weights = [math.exp(sum(ak * yk for ak, yk in zip(a, y))) for y in configs]
    z = sum(weights)
    pmf = [w / z for w in weights]
    if observed:
        m = next(i for i in range(km1 + 1) if time <= ends[i])
        ll = math.log(weights[m]) - math.log(z)
    else:
        ll = math.log(sum(w for w, end in zip(weights, ends) if end >= time)) - math.log(z)
    return pmf, ll


def cindex_pairs(scores, times, events, event):
    credit, pairs = 0.0, 0
    n = len(scores)
    for i in range(n):
        if events[i] != event:
            continue
        for j in range(n):
            if times[i] < times[j]:
                pairs += 1
                if scores[i] > scores[j]:
                    credit += 1.0
                elif scores[i] == scores[j]:
                    credit += 0.5
    return credit / pairs


def auroc_pairs(scores, times, events, event, tau, exclude_censored=False):
    pos, neg = [], []
    for s, t, ev in zip(scores, times, events):
        if t <= tau and ev == event:
            pos.append(s)
        elif exclude_censored and ev == 0 and t < tau:
            continue
        else:
            neg.append(s)
    credit = 0.0
    for p in pos:
        for q in neg:
            credit += 1.0 if p > q else 0.5 if p == q else 0.0
    return credit / (len(pos) * len(neg))


def linear_quantile(values, p):
    """Type-7 sample quantile: interpolate at position p * (n - 1) of the sorted sample."""
    v = sorted(values)
    h = p * (len(v) - 1)
    lo = math.floor(h)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (h - lo) * (v[hi] - v[lo])
