# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the loops in ``_kernels_py``; same signatures, same semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def mtlr_nll_grad(logits, events, bins):
    cdef double[:, :, ::1] a = np.ascontiguousarray(logits, dtype=np.float64)
    cdef long long[::1] ev = np.ascontiguousarray(events, dtype=np.int64)
    cdef long long[::1] bn = np.ascontiguousarray(bins, dtype=np.int64)
    cdef Py_ssize_t n = a.shape[0], ne = a.shape[1], km1 = a.shape[2]
    cdef Py_ssize_t k = km1 + 1
    out_nll = np.empty(n, dtype=np.float64)
    out_grad = np.empty((n, ne, km1), dtype=np.float64)
    cdef double[::1] nll = out_nll
    cdef double[:, :, ::1] g = out_grad
    cdef double[:, ::1] s = np.empty((ne, k), dtype=np.float64)
    cdef double[:, ::1] d = np.empty((ne, k), dtype=np.float64)
    cdef Py_ssize_t r, e, i, j, obs_e
    cdef double acc, top, z, log_z, mtop, msum, log_m, p, q, run

    with nogil:
        for r in range(n):
            top = -INFINITY
            for e in range(ne):
                s[e, km1] = 0.0
                acc = 0.0
                for i in range(km1 - 1, -1, -1):
                    acc = acc + a[r, e, i]
                    s[e, i] = acc
                for i in range(k):
                    if s[e, i] > top:
                        top = s[e, i]
            z = 0.0
            for e in range(ne):
                for i in range(k):
                    z = z + exp(s[e, i] - top)
            log_z = top + log(z)

            j = bn[r]
            if ev[r] > 0:
                obs_e = ev[r] - 1
                nll[r] = log_z - s[obs_e, j]
                for e in range(ne):
                    for i in range(k):
                        p = exp(s[e, i] - log_z)
                        if e == obs_e and i == j:
                            p = p - 1.0
                        d[e, i] = p
            else:
                mtop = -INFINITY
                for e in range(ne):
                    for i in range(j, k):
                        if s[e, i] > mtop:
                            mtop = s[e, i]
                msum = 0.0
                for e in range(ne):
                    for i in range(j, k):
                        msum = msum + exp(s[e, i] - mtop)
                log_m = mtop + log(msum)
                nll[r] = log_z - log_m
                for e in range(ne):
                    for i in range(k):
                        p = exp(s[e, i] - log_z)
                        if i >= j:
                            q = exp(s[e, i] - log_m)
                        else:
                            q = 0.0
                        d[e, i] = p - q

            for e in range(ne):
                run = 0.0
                for i in range(km1):
                    run = run + d[e, i]
                    g[r, e, i] = run
    return out_nll, out_grad


cdef inline long long _prefix(long long[::1] tree, Py_ssize_t i) noexcept nogil:
    # Fenwick tree: number of inserted scores with rank < i
    cdef long long total = 0
    while i > 0:
        total += tree[i]
        i -= i & (-i)
    return total


def cindex_counts(scores, times, events, long long event):
    """Sweep subjects from latest to earliest time; a Fenwick tree over score
    ranks counts the strictly later subjects below or tied with each event."""
    t_arr = np.ascontiguousarray(times, dtype=np.float64)
    levels, rank_arr = np.unique(np.asarray(scores, dtype=np.float64), return_inverse=True)
    cdef long long[::1] rank = np.ascontiguousarray(rank_arr.reshape(-1), dtype=np.int64) + 1
    cdef long long[::1] order = np.ascontiguousarray(np.argsort(-t_arr, kind="stable"), dtype=np.int64)
    cdef double[::1] t = t_arr
    cdef long long[::1] ev = np.ascontiguousarray(events, dtype=np.int64)
    cdef long long[::1] tree = np.zeros(levels.size + 1, dtype=np.int64)
    cdef Py_ssize_t n = t.shape[0], m = levels.size, start = 0, stop, a, i, r
    cdef long long below = 0, tied = 0, pairs = 0, inserted = 0, lo, hi
    with nogil:
        while start < n:
            stop = start
            while stop < n and t[order[stop]] == t[order[start]]:
                stop += 1
            for a in range(start, stop):
                i = order[a]
                if ev[i] == event:
                    lo = _prefix(tree, rank[i] - 1)
                    hi = _prefix(tree, rank[i])
                    below += lo
                    tied += hi - lo
                    pairs += inserted
            for a in range(start, stop):
                r = rank[order[a]]
                while r <= m:
                    tree[r] += 1
                    r += r & (-r)
            inserted += stop - start
            start = stop
    return float(below + 0.5 * tied), pairs


def auroc_counts(pos_scores, neg_scores):
    cdef double[::1] ps = np.ascontiguousarray(pos_scores, dtype=np.float64)
    cdef double[::1] ns = np.ascontiguousarray(np.sort(np.asarray(neg_scores, dtype=np.float64)))
    cdef Py_ssize_t i, lo, hi, mid, n = ns.shape[0]
    cdef long long below = 0, tied = 0, left
    with nogil:
        for i in range(ps.shape[0]):
            lo, hi = 0, n
            while lo < hi:
                mid = (lo + hi) // 2
                if ns[mid] < ps[i]:
                    lo = mid + 1
                else:
                    hi = mid
            left = lo
            hi = n
            while lo < hi:
                mid = (lo + hi) // 2
                if ns[mid] <= ps[i]:
                    lo = mid + 1
                else:
                    hi = mid
            below += left
            tied += lo - left
    return float(below + 0.5 * tied)
