"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on the same inputs by both backends; the table reports the
best wall time of ``--repeat`` runs and checks that the outputs agree.
"""
import argparse
import time

import numpy as np

from crmtlr import _kernels_py

try:
    from crmtlr import _kernels as compiled
except ImportError:
    compiled = None


def best_time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def cases(rng):
    n, e, km1 = 5000, 2, 49
    logits = rng.standard_normal((n, e, km1))
    events = rng.integers(0, e + 1, size=n)
    bins = rng.integers(0, km1 + 1, size=n)
    yield "mtlr_nll_grad N=5000 E=2 K=50", "mtlr_nll_grad", (logits, events, bins)

    n = 3000
    scores = rng.standard_normal(n)
    times = rng.exponential(size=n)
    events = rng.integers(0, 3, size=n)
    yield "cindex_counts N=3000", "cindex_counts", (scores, times, events, 1)

    yield "auroc_counts 2000 x 8000", "auroc_counts", (rng.standard_normal(2000), rng.standard_normal(8000))


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    return bool(np.allclose(a, b, rtol=1e-10, atol=1e-12))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if compiled is None:
        print("compiled extension not available; timing the numpy fallback only")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<32} {'numpy (ms)':>11} {'cython (ms)':>12} {'speedup':>8}  agree")
    for label, name, inputs in cases(rng):
        t_py, out_py = best_time(getattr(_kernels_py, name), inputs, args.repeat)
        if compiled is None:
            print(f"{label:<32} {1e3 * t_py:>11.2f} {'-':>12} {'-':>8}  -")
            continue
        t_c, out_c = best_time(getattr(compiled, name), inputs, args.repeat)
        print(f"{label:<32} {1e3 * t_py:>11.2f} {1e3 * t_c:>12.2f} {t_py / t_c:>7.1f}x  {agree(out_py, out_c)}")


if __name__ == "__main__":
    main()
