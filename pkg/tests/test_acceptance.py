"""Acceptance suite: eight end-to-end criteria, one PASS/FAIL line each.

Run under pytest (lines are repeated in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crmtlr import gradcheck, synthgen  # noqa: E402
from crmtlr.dataset import Cohort, TimeGrid, build_grid  # noqa: E402
from crmtlr.metrics import cause_specific_cindex, horizon_auroc, lifetime_risk  # noqa: E402
from crmtlr.mtlr import (  # noqa: E402
    CifCurve,
    MtlrHead,
    censored_log_marginal,
    cif,
    cif_at,
    joint_pmf,
    log_likelihood,
    log_partition,
)
from crmtlr.trainer import ModelFileError, TrainConfig, dumps, load, save, train  # noqa: E402
from oracles import auroc_pairs, cindex_pairs, enumerate_subject, single_event_mtlr  # noqa: E402

RESULTS: list[str] = []

RECOVERY_SPEC = synthgen.HazardSpec(
    [[0.8, -0.5, 0.4, 0.0, 0.0], [-0.4, 0.0, 0.0, 0.8, 0.5]],
    [-1.0, -1.3],
    censor_rate=0.18,
    t_max=10.0,
)
INTERACTION_SPEC = synthgen.HazardSpec(
    [[0.3, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.3, 0.0]],
    [-1.0, -1.0],
    censor_rate=0.15,
    t_max=10.0,
    interaction=[1.5, -1.5],
)
LINEAR = TrainConfig(learning_rate=0.01, c1_head=1.0, max_epochs=3000, patience=100, hidden=())
NEURAL = TrainConfig(
    learning_rate=1e-3, c1_head=0.1, c2_encoder=1e-3, max_epochs=300, patience=20, hidden=(32, 32, 32), batch_size=64
)
NEURAL_MARGIN = 0.02


def record(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def split_train(spec, train_seed, test_seed):
    """2000 train (1700 fit / 300 validation by seeded shuffle) and 1000 test subjects."""
    X, times, events = synthgen.as_arrays(synthgen.generate(spec, 2000, seed=train_seed))
    Xt, times_t, events_t = synthgen.as_arrays(synthgen.generate(spec, 1000, seed=test_seed))
    perm = np.random.default_rng(0).permutation(2000)
    fit, val = perm[:1700], perm[1700:]
    grid = build_grid(times[fit], events[fit])
    cohort = Cohort.from_arrays(X, times, events, grid, spec.n_events)
    return cohort.subset(fit), cohort.subset(val), grid, (X, times, events), (Xt, times_t, events_t)


def random_cohort(rng, head, n):
    X = rng.standard_normal((n, head.input_dim))
    events = rng.integers(0, head.n_events + 1, size=n)
    bins = rng.integers(1, head.n_intervals + 1, size=n)
    return Cohort(X, events, bins, head.n_events, head.n_intervals)


def criterion_1():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_sum, monotone = 0.0, True
    for i in range(100):
        k, e = (2, 5, 30)[i % 3], (1, 2, 3)[(i // 3) % 3]
        d = int(rng.integers(1, 6))
        head = MtlrHead.random(e, k, d, rng, scale=float(rng.uniform(0.1, 5.0)))
        grid = joint_pmf(head, rng.standard_normal(d))
        worst_sum = max(worst_sum, abs(grid.probs.sum() - 1.0))
        monotone &= bool(np.all(np.diff(cif(grid).values, axis=1) >= 0))
    elapsed = time.perf_counter() - start
    ok = worst_sum <= 1e-9 and monotone and elapsed < 5
    return record(1, "normalization", ok, f"max |sum-1| = {worst_sum:.2e}, CIF monotone = {monotone}, {elapsed:.2f}s")


def criterion_2():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(50):
        n_events, k, d = int(rng.integers(1, 4)), int(rng.integers(2, 6)), int(rng.integers(1, 5))
        head = MtlrHead.random(n_events, k, d, rng, scale=0.8)
        cohort = random_cohort(rng, head, 6)
        total = 0.0
        for x, e, b in zip(cohort.X, cohort.events, cohort.bins):
            log_z, pmf, ll = enumerate_subject(head.weights, head.biases, x, e, b)
            _, _, tail = enumerate_subject(head.weights, head.biases, x, 0, b)
            worst = max(
                worst,
                abs(log_partition(head, x) - log_z),
                float(np.abs(joint_pmf(head, x).probs - pmf).max()),
                abs(censored_log_marginal(head, x, b) - tail),
            )
            total += ll
        worst = max(worst, abs(log_likelihood(head, cohort) - total))
    return record(2, "brute-force equivalence", worst <= 1e-10, f"max abs deviation = {worst:.2e} (tol 1e-10)")


def criterion_3():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(20):
        k = int(rng.integers(2, 8))
        edges = np.sort(rng.uniform(0.1, 5.0, size=k - 1))
        grid = TimeGrid(edges)
        d = int(rng.integers(1, 5))
        head = MtlrHead.random(1, k, d, rng, scale=0.7)
        n = 15
        X = rng.standard_normal((n, d))
        times = rng.exponential(2.0, size=n)
        observed = rng.random(n) < 0.6
        cohort = Cohort.from_arrays(X, times, observed.astype(int), grid, n_events=1)
        expected = 0.0
        for x, t, o in zip(X, times, observed):
            pmf, ll = single_event_mtlr(head.weights[0], head.biases[0], edges, x, t, o)
            worst = max(worst, float(np.abs(joint_pmf(head, x).probs[0] - pmf).max()))
            expected += ll
        worst = max(worst, abs(log_likelihood(head, cohort) - expected) / max(1.0, abs(expected)))
    return record(3, "single-event reduction", worst <= 1e-12, f"max deviation = {worst:.2e} (tol 1e-12)")


def criterion_4():
    start = time.perf_counter()
    report = gradcheck.run(seed=104, points=10, n=10, n_intervals=4, n_events=2)
    elapsed = time.perf_counter() - start
    worst = max(report.values())
    ok = worst < gradcheck.REL_TOL and elapsed < 30
    return record(4, "gradient check", ok, f"max relative error = {worst:.2e} over {len(report)} groups, {elapsed:.2f}s")


def criterion_5():
    rng = np.random.default_rng(105)
    mismatches, compared = 0, 0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        times = rng.integers(1, 15, size=n).astype(float)
        events = rng.integers(0, 3, size=n)
        scores = np.round(rng.standard_normal(n), 1)
        for e in (1, 2):
            for ours, brute in (
                (lambda: cause_specific_cindex(scores, times, events, e), lambda: cindex_pairs(scores, times, events, e)),
                (lambda: horizon_auroc(scores, times, events, e, 6.0), lambda: auroc_pairs(scores, times, events, e, 6.0)),
            ):
                try:
                    expected = brute()
                except ZeroDivisionError:
                    continue
                compared += 1
                mismatches += ours() != expected
    return record(5, "metric oracles", mismatches == 0, f"{compared} exact comparisons, {mismatches} mismatches")


def criterion_6():
    start = time.perf_counter()
    tr, va, grid, (_, times, events), (Xt, times_t, events_t) = split_train(RECOVERY_SPEC, 1, 2)
    bundle = train(tr, va, LINEAR, grid)
    cif_test = bundle.predict_cif(Xt)
    risk = lifetime_risk(cif_test)
    t_med = float(np.median(times[events > 0]))
    at_med = cif_at(CifCurve(cif_test), grid, t_med)
    ratios, maes = [], []
    for e in (1, 2):
        model_c = cause_specific_cindex(risk[:, e - 1], times_t, events_t, e)
        oracle_c = synthgen.oracle_cindex(RECOVERY_SPEC, synthgen.generate(RECOVERY_SPEC, 1000, seed=2), e)
        ratios.append(model_c / oracle_c)
        maes.append(float(np.abs(at_med[:, e - 1] - synthgen.oracle_cif(RECOVERY_SPEC, Xt, t_med, e)).mean()))
    elapsed = time.perf_counter() - start
    ok = min(ratios) >= 0.95 and max(maes) < 0.05 and elapsed < 300
    detail = (
        f"C-index/oracle = {ratios[0]:.3f}, {ratios[1]:.3f} (>= 0.95); "
        f"CIF MAE at t = {t_med:.3f}: {maes[0]:.4f}, {maes[1]:.4f} (< 0.05); {elapsed:.1f}s"
    )
    return record(6, "synthetic recovery", ok, detail)


def criterion_7():
    tr, va, grid, _, (Xt, times_t, events_t) = split_train(INTERACTION_SPEC, 11, 12)
    scores = {}
    for name, config in (("linear", LINEAR), ("neural", NEURAL)):
        risk = lifetime_risk(train(tr, va, config, grid).predict_cif(Xt))
        scores[name] = [cause_specific_cindex(risk[:, e - 1], times_t, events_t, e) for e in (1, 2)]
    gains = [n - l for n, l in zip(scores["neural"], scores["linear"])]
    ok = min(gains) >= NEURAL_MARGIN
    detail = (
        f"linear C-index {scores['linear'][0]:.3f}/{scores['linear'][1]:.3f}, "
        f"neural {scores['neural'][0]:.3f}/{scores['neural'][1]:.3f}, min gain {min(gains):.3f} (>= {NEURAL_MARGIN})"
    )
    return record(7, "neural beats linear", ok, detail)


def criterion_8():
    spec = synthgen.HazardSpec(np.ones((2, 3)), [0.0, -0.5], censor_rate=0.2)
    X, times, events = synthgen.as_arrays(synthgen.generate(spec, 200, seed=108))
    grid = build_grid(times[:160], events[:160])
    cohort = Cohort.from_arrays(X, times, events, grid, 2)
    config = TrainConfig(learning_rate=1e-2, max_epochs=5, hidden=(8, 8))
    bundle = train(cohort.subset(range(160)), cohort.subset(range(160, 200)), config, grid)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "model.json"
        save(bundle, path)
        loaded = load(path)
        probe = np.random.default_rng(0).standard_normal((100, 3))
        worst = float(np.abs(loaded.predict_cif(probe) - bundle.predict_cif(probe)).max())
        text = dumps(bundle)
        rejected = 0
        for cut in (len(text) // 4, len(text) // 2, len(text) - 2):
            path.write_text(text[:cut])
            try:
                load(path)
            except ModelFileError:
                rejected += 1
    ok = worst <= 1e-15 and rejected == 3
    return record(8, "serialization", ok, f"max prediction change = {worst:.1e}, truncated files rejected {rejected}/3")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 9)])
def test_acceptance(criterion):
    assert criterion(), RESULTS[-1]


if __name__ == "__main__":
    outcomes = [c() for c in CRITERIA]
    print(f"{sum(outcomes)}/{len(outcomes)} criteria passed")
    sys.exit(0 if all(outcomes) else 1)
