import numpy as np
import pytest

from crmtlr import synthgen
from crmtlr.dataset import Cohort, DataError, FeatureEncoding, Schema, build_grid
from crmtlr.mtlr import MtlrHead, loss_and_gradient
from crmtlr.trainer import (
    AdamState,
    ModelBundle,
    ModelFileError,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    dumps,
    load,
    save,
    train,
)

SEPARABLE = synthgen.HazardSpec([[3.0, 0.0], [-3.0, 0.0]], [0.0, 0.0], censor_rate=0.1)


def split_cohorts(spec, n, seed, k=None):
    X, times, events = synthgen.as_arrays(synthgen.generate(spec, n, seed=seed))
    n_train = int(0.8 * n)
    grid = build_grid(times[:n_train], events[:n_train], k=k)
    tr = Cohort.from_arrays(X[:n_train], times[:n_train], events[:n_train], grid, spec.n_events)
    va = Cohort.from_arrays(X[n_train:], times[n_train:], events[n_train:], grid, spec.n_events)
    return tr, va, grid


class TestAdam:
    def test_zero_gradient(self):
        p = [np.array([1.0, -2.0])]
        new_p, fresh = adam_step(p, [np.zeros(2)], AdamState.like(p), lr=0.1)
        np.testing.assert_array_equal(new_p[0], p[0])
        assert fresh.step == 1
        state = AdamState([np.array([0.5, 0.5])], [np.array([0.1, 0.1])], step=3)
        _, new_state = adam_step(p, [np.zeros(2)], state, lr=0.1)
        np.testing.assert_allclose(new_state.m[0], 0.9 * 0.5)
        np.testing.assert_allclose(new_state.v[0], 0.999 * 0.1)
        assert new_state.step == 4

    def test_first_step_by_hand(self):
        g = np.array([0.5, -2.0, 1e-3])
        new_p, _ = adam_step([np.zeros(3)], [g], AdamState.like([g]), lr=0.01)
        # m_hat = g and v_hat = g^2 after bias correction
        expected = -0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(new_p[0], expected, rtol=1e-15)

    def test_constant_gradient_step_size(self):
        lr = 1e-3
        params, g = [np.array([0.0])], [np.array([0.37])]
        state = AdamState.like(params)
        for _ in range(1000):
            before = params[0].copy()
            params, state = adam_step(params, g, state, lr)
        assert abs(abs(params[0][0] - before[0]) - lr) <= 0.01 * lr

    def test_inputs_untouched(self):
        p = [np.ones(2)]
        state = AdamState.like(p)
        adam_step(p, [np.ones(2)], state, lr=0.1)
        np.testing.assert_array_equal(p[0], 1.0)
        assert state.step == 0 and not state.m[0].any()

    def test_errors(self):
        with pytest.raises(ValueError, match="non-finite"):
            adam_step([np.zeros(1)], [np.array([np.nan])], AdamState.like([np.zeros(1)]), 0.1)
        with pytest.raises(ValueError):
            adam_step([np.zeros(2)], [np.zeros(3)], AdamState.like([np.zeros(2)]), 0.1)


def test_plain_gradient_descent_decreases_loss():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 3))
    cohort = Cohort(X, rng.integers(0, 3, 20), rng.integers(1, 5, 20), 2, 4)
    head = MtlrHead.random(2, 4, 3, rng, scale=0.3)
    losses = []
    for _ in range(50):
        loss, g = loss_and_gradient(head, cohort, c1=0.0)
        losses.append(loss)
        head = MtlrHead(head.weights - 1e-3 * g.weights, head.biases - 1e-3 * g.biases)
    assert np.all(np.diff(losses) < 0)


class TestTrain:
    def test_deterministic(self):
        tr, va, grid = split_cohorts(SEPARABLE, 60, seed=1)
        for hidden in ((), (8, 8)):
            config = TrainConfig(learning_rate=0.01, max_epochs=1, hidden=hidden)
            assert dumps(train(tr, va, config, grid)) == dumps(train(tr, va, config, grid))

    def test_training_reduces_loss(self):
        X, times, events = synthgen.as_arrays(synthgen.generate(SEPARABLE, 50, seed=2))
        grid = build_grid(times, events, k=4)
        cohort = Cohort.from_arrays(X, times, events, grid, 2)
        history = []
        config = TrainConfig(learning_rate=0.01, max_epochs=200, patience=1000, hidden=(), batch_size="full")
        train(cohort, cohort, config, grid, history=history)
        assert len(history) == 201
        assert history[-1][1] < history[0][1]

    def test_best_validation_selected(self):
        tr, va, grid = split_cohorts(SEPARABLE, 200, seed=3)
        history = []
        config = TrainConfig(learning_rate=0.05, max_epochs=150, patience=20, hidden=())
        bundle = train(tr, va, config, grid, history=history)
        assert bundle.meta["val_loss"] <= history[-1][2]
        assert bundle.meta["val_loss"] == min(h[2] for h in history)
        assert history[bundle.meta["best_epoch"]][2] == bundle.meta["val_loss"]

    def test_huge_penalty_removes_covariate_effect(self):
        # biases are unpenalized, so the limit is a covariate-free PMF, not a uniform one
        tr, va, grid = split_cohorts(SEPARABLE, 100, seed=4, k=4)
        free = train(tr, va, TrainConfig(learning_rate=0.005, max_epochs=300, patience=1000, hidden=()), grid)
        config = TrainConfig(learning_rate=0.005, c1_head=1e6, max_epochs=300, patience=1000, hidden=())
        bundle = train(tr, va, config, grid)
        assert np.abs(bundle.head.weights).max() < 0.02 * np.abs(free.head.weights).max()
        pmf = bundle.predict_pmf(va.X)
        assert np.abs(pmf - pmf[0]).max() < 0.02

    def test_divergence_detected(self, monkeypatch):
        import crmtlr.trainer as trainer_mod

        tr, va, grid = split_cohorts(SEPARABLE, 60, seed=5)
        real = trainer_mod.objective
        calls = {"n": 0}

        def flaky(*args, **kwargs):
            calls["n"] += 1
            loss, grads = real(*args, **kwargs)
            return (np.nan if calls["n"] > 4 else loss), grads

        monkeypatch.setattr(trainer_mod, "objective", flaky)
        with pytest.raises(TrainingDiverged, match="epoch"):
            train(tr, va, TrainConfig(learning_rate=0.1, max_epochs=5, hidden=()), grid)

    def test_empty_cohort(self):
        tr, va, grid = split_cohorts(SEPARABLE, 60, seed=6)
        with pytest.raises(DataError):
            train(tr.subset([]), va, TrainConfig(hidden=()), grid)

    def test_config_validation(self):
        for bad in (dict(learning_rate=0), dict(patience=0), dict(c1_head=-1)):
            with pytest.raises(ValueError):
                TrainConfig(**bad)
        assert TrainConfig(hidden=()).resolved_batch_size(500) == 500
        assert TrainConfig().resolved_batch_size(500) == 64


class TestSerialization:
    @pytest.fixture
    def bundle(self):
        tr, va, grid = split_cohorts(SEPARABLE, 80, seed=7)
        rows = [{"x1": str(v[0]), "x2": str(v[1])} for v in tr.X]
        encoding = FeatureEncoding.fit(rows, Schema.parse("x1 = continuous\nx2 = continuous"))
        return train(tr, va, TrainConfig(learning_rate=0.01, max_epochs=5, hidden=(6, 5)), grid, encoding)

    def test_round_trip_bit_exact(self, bundle, tmp_path):
        save(bundle, tmp_path / "a.json")
        loaded = load(tmp_path / "a.json")
        save(loaded, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        X = np.random.default_rng(0).standard_normal((30, 2))
        assert np.abs(loaded.predict_cif(X) - bundle.predict_cif(X)).max() <= 1e-15
        for p, q in zip(bundle.encoder.parameters(), loaded.encoder.parameters()):
            assert p.tobytes() == q.tobytes()

    def test_top_level_layout(self, bundle):
        import json

        d = json.loads(dumps(bundle))
        assert {"grid", "encoding", "encoder", "head", "meta", "format_version"} <= set(d)
        assert d["format_version"] == 1

    def test_truncated_file_rejected(self, bundle, tmp_path):
        text = dumps(bundle)
        path = tmp_path / "t.json"
        path.write_text(text[: len(text) // 2])
        with pytest.raises(ModelFileError):
            load(path)

    def test_dimension_mismatch_rejected(self, bundle, tmp_path):
        import json

        d = json.loads(dumps(bundle))
        d["head"]["weights"] = [[[0.0] * 3] * len(row) for row in d["head"]["weights"]]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(d))
        with pytest.raises(ModelFileError, match="does not match"):
            load(path)

    def test_bundle_consistency(self, bundle):
        with pytest.raises(ValueError):
            ModelBundle(bundle.grid, bundle.encoding, bundle.encoder, MtlrHead.zeros(2, bundle.grid.n_intervals, 3))
