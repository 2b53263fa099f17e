"""Joint Adam training of encoder and head, model selection, and model files."""
from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import encoder as enc
from .dataset import Cohort, DataError, FeatureEncoding, TimeGrid
from .mtlr import MtlrHead, head_objective, predict_cif, predict_pmf

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    c1_head: float = 0.0
    c2_encoder: float = 0.0
    max_epochs: int = 100
    batch_size: int | str | None = None  # None: full batch when linear, 64 otherwise
    seed: int = 0
    patience: int = 10
    hidden: tuple[int, ...] = (128, 128, 128)
    penalty: str = "ridge"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.c1_head < 0 or self.c2_encoder < 0:
            raise ValueError("regularization strengths must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def resolved_batch_size(self, n: int) -> int:
        b = self.batch_size
        if b is None:
            b = "full" if not self.hidden else 64
        if b == "full":
            return n
        b = int(b)
        if b < 1:
            raise ValueError("batch_size must be positive")
        return min(b, n)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update. Returns new ``(params, state)``; inputs are untouched."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    corr1, corr2 = 1.0 - b1**t, 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, m=new_m, v=new_v, step=t)


@dataclass(frozen=True)
class ModelBundle:
    grid: TimeGrid
    encoding: FeatureEncoding | None
    encoder: enc.EncoderNet
    head: MtlrHead
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.encoder.output_dim != self.head.input_dim:
            raise ValueError(
                f"encoder output ({self.encoder.output_dim}) does not match head input ({self.head.input_dim})"
            )
        if self.head.n_intervals != self.grid.n_intervals:
            raise ValueError(f"head has {self.head.n_intervals} intervals, grid has {self.grid.n_intervals}")
        if self.encoding is not None and self.encoding.dim != self.encoder.input_dim:
            raise ValueError(f"encoding width {self.encoding.dim} does not match encoder input {self.encoder.input_dim}")

    @property
    def n_events(self) -> int:
        return self.head.n_events

    def representation(self, X) -> np.ndarray:
        return self.encoder.forward_batch(X)[0]

    def predict_pmf(self, X) -> np.ndarray:
        return predict_pmf(self.head, self.representation(X))

    def predict_cif(self, X) -> np.ndarray:
        return predict_cif(self.head, self.representation(X))


# parameters are flattened as encoder params (W, b per layer) followed by head (W, b)
def _params(net: enc.EncoderNet, head: MtlrHead) -> list[np.ndarray]:
    return net.parameters() + [head.weights, head.biases]


def _unflatten(net: enc.EncoderNet, params):
    n = len(net.layers) * 2
    return net.with_parameters(params[:n]), MtlrHead(params[n], params[n + 1])


def objective(net: enc.EncoderNet, head: MtlrHead, X, events, bins, c1=0.0, c2=0.0, penalty_kind="ridge"):
    """Mean NLL + (c1/2)*head penalty + (c2/2)*||encoder weights||^2.

    Returns ``(loss, grads)`` with grads laid out as encoder params then head W, b.
    """
    rep, cache = net.forward_batch(X)
    loss, head_grad, d_rep = head_objective(head, rep, events, bins, c1, penalty_kind)
    _, enc_grads = net.backward_batch(cache, d_rep)
    if c2:
        for n, layer in enumerate(net.layers):
            loss += 0.5 * c2 * float(np.sum(layer.weight * layer.weight))
            enc_grads[2 * n] = enc_grads[2 * n] + c2 * layer.weight
    return loss, enc_grads + [head_grad.weights, head_grad.biases]


def evaluate_nll(net, head, cohort: Cohort) -> float:
    loss, _ = objective(net, head, cohort.X, cohort.events, cohort.bins)
    return loss


def initial_model(input_dim: int, n_events: int, n_intervals: int, config: TrainConfig):
    rng = np.random.default_rng(config.seed)
    if config.hidden:
        net = enc.init((input_dim, *config.hidden), seed=rng)
    else:
        net = enc.EncoderNet.identity(input_dim)
    return net, MtlrHead.zeros(n_events, n_intervals, net.output_dim), rng


def train(
    train_cohort: Cohort,
    val_cohort: Cohort,
    config: TrainConfig,
    grid: TimeGrid,
    encoding: FeatureEncoding | None = None,
    history: list | None = None,
) -> ModelBundle:
    """Adam on the regularized objective, keeping the best-validation parameters.

    Epoch 0 is the initialization. ``history``, when given, receives one
    ``(epoch, train_loss, val_nll)`` tuple per epoch, where train_loss is the
    full-cohort regularized objective.
    """
    if len(train_cohort) == 0 or len(val_cohort) == 0:
        raise DataError("training and validation cohorts must be non-empty")
    if train_cohort.n_intervals != grid.n_intervals or val_cohort.n_intervals != grid.n_intervals:
        raise DataError("cohort bins were computed on a different grid")
    n_events = max(train_cohort.n_events, val_cohort.n_events)
    net, head, rng = initial_model(train_cohort.X.shape[1], n_events, grid.n_intervals, config)
    c1, c2, pen = config.c1_head, config.c2_encoder, config.penalty

    def full_loss(net, head):
        loss, _ = objective(net, head, train_cohort.X, train_cohort.events, train_cohort.bins, c1, c2, pen)
        return loss

    params = _params(net, head)
    state = AdamState.like(params)
    n = len(train_cohort)
    batch = config.resolved_batch_size(n)

    best_val = evaluate_nll(net, head, val_cohort)
    best = (0, params, best_val)
    train_loss = full_loss(net, head)
    if history is not None:
        history.append((0, train_loss, best_val))
    stale = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = np.arange(n) if batch == n else rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            net, head = _unflatten(net, params)
            loss, grads = objective(
                net, head, train_cohort.X[idx], train_cohort.events[idx], train_cohort.bins[idx], c1, c2, pen
            )
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged(f"non-finite loss or gradient at epoch {epoch} (loss={loss})")
            params, state = adam_step(params, grads, state, config.learning_rate)
        net, head = _unflatten(net, params)
        val = evaluate_nll(net, head, val_cohort)
        train_loss = full_loss(net, head)
        if not (np.isfinite(val) and np.isfinite(train_loss)):
            raise TrainingDiverged(f"non-finite loss after epoch {epoch}")
        if history is not None:
            history.append((epoch, train_loss, val))
        log.debug("epoch %d train %.6f val %.6f", epoch, train_loss, val)
        if val < best_val:
            best_val, best, stale = val, (epoch, params, val), 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    best_epoch, best_params, _ = best
    net, head = _unflatten(net, best_params)
    meta = {
        "config": _config_dict(config),
        "best_epoch": best_epoch,
        "epochs_run": epoch,
        "val_loss": best_val,
        "n_train": n,
        "n_val": len(val_cohort),
    }
    return ModelBundle(grid, encoding, net, head, meta)


def _config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["hidden"] = list(config.hidden)
    return d


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["hidden"] = tuple(d.get("hidden", ()))
    return TrainConfig(**d)


def bundle_to_dict(bundle: ModelBundle) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "grid": {"edges": bundle.grid.edges.tolist()},
        "encoding": None if bundle.encoding is None else bundle.encoding.to_dict(),
        "encoder": {
            "input_dim": bundle.encoder.input_dim,
            "layers": [
                {"weight": layer.weight.tolist(), "bias": layer.bias.tolist(), "relu": layer.relu}
                for layer in bundle.encoder.layers
            ],
        },
        "head": {"weights": bundle.head.weights.tolist(), "biases": bundle.head.biases.tolist()},
        "meta": bundle.meta,
    }


def bundle_from_dict(d: dict) -> ModelBundle:
    try:
        if d.get("format_version") != FORMAT_VERSION:
            raise ModelFileError(f"unsupported format_version {d.get('format_version')!r}")
        grid = TimeGrid(np.array(d["grid"]["edges"], dtype=np.float64))
        encoding = None if d["encoding"] is None else FeatureEncoding.from_dict(d["encoding"])
        layers = tuple(
            enc.Layer(
                np.array(layer["weight"], dtype=np.float64).reshape(len(layer["bias"]), -1),
                np.array(layer["bias"], dtype=np.float64),
                bool(layer["relu"]),
            )
            for layer in d["encoder"]["layers"]
        )
        net = enc.EncoderNet(layers, int(d["encoder"]["input_dim"]))
        head = MtlrHead(np.array(d["head"]["weights"], dtype=np.float64), np.array(d["head"]["biases"], dtype=np.float64))
        return ModelBundle(grid, encoding, net, head, dict(d.get("meta") or {}))
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"invalid model file: {exc}") from None


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(bundle: ModelBundle) -> str:
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps(bundle_to_dict(bundle), indent=1, sort_keys=True, allow_nan=False) + "\n"


def save(bundle: ModelBundle, path) -> None:
    atomic_write_text(path, dumps(bundle))


def load(path) -> ModelBundle:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: malformed model file ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(d, dict):
        raise ModelFileError(f"{path}: model file must hold a JSON object")
    return bundle_from_dict(d)

