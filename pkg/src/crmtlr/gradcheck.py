"""Central finite-difference checks of the end-to-end training gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .mtlr import MtlrHead
from .trainer import objective

REL_TOL = 1e-4
ABS_FLOOR = 1e-8


def relative_error(analytic, numeric, rel_tol: float = REL_TOL, abs_floor: float = ABS_FLOOR) -> np.ndarray:
    """Elementwise |a - f| / max(|a|, |f|, abs_floor / rel_tol).

    The denominator floor makes ``error < rel_tol`` equivalent to passing
    either the relative test or, for near-zero entries, ``|a - f| < abs_floor``.
    """
    a = np.asarray(analytic, dtype=np.float64)
    f = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(f)), abs_floor / rel_tol)
    return np.abs(a - f) / scale


def numeric_gradient(fn, params, h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of scalar ``fn(params)`` with respect to every entry."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = fn(params)
            flat[i] = keep - h
            down = fn(params)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


@dataclass
class Instance:
    net: enc.EncoderNet
    head: MtlrHead
    X: np.ndarray
    events: np.ndarray
    bins: np.ndarray
    c1: float
    c2: float


def random_instance(rng, n=10, d=3, hidden=(5, 4), n_intervals=4, n_events=2, c1=0.3, c2=0.2) -> Instance:
    net = enc.init((d, *hidden), seed=rng)
    # non-zero biases so the check covers them too
    net = net.with_parameters([p + 0.1 * rng.standard_normal(p.shape) if p.ndim == 1 else p for p in net.parameters()])
    head = MtlrHead.random(n_events, n_intervals, net.output_dim, rng, scale=0.5)
    X = rng.standard_normal((n, d))
    events = rng.integers(0, n_events + 1, size=n)
    bins = rng.integers(1, n_intervals + 1, size=n)
    return Instance(net, head, X, events, bins, c1, c2)


def group_names(net: enc.EncoderNet) -> list[str]:
    names = []
    for n in range(len(net.layers)):
        names += [f"encoder[{n}].weight", f"encoder[{n}].bias"]
    return names + ["head.weights", "head.biases"]


def check_instance(inst: Instance, h: float = 1e-5, corrupt: bool = False) -> dict[str, float]:
    """Max relative error per parameter group for one instance."""
    n_enc = 2 * len(inst.net.layers)

    def loss(params):
        net = inst.net.with_parameters(params[:n_enc])
        head = MtlrHead(params[n_enc], params[n_enc + 1])
        value, _ = objective(net, head, inst.X, inst.events, inst.bins, inst.c1, inst.c2)
        return value

    params = [p.copy() for p in inst.net.parameters()] + [inst.head.weights.copy(), inst.head.biases.copy()]
    _, analytic = objective(inst.net, inst.head, inst.X, inst.events, inst.bins, inst.c1, inst.c2)
    if corrupt:
        analytic[-2] = analytic[-2] * 1.01
    numeric = numeric_gradient(loss, params, h)
    return {
        name: float(relative_error(a, f).max(initial=0.0))
        for name, a, f in zip(group_names(inst.net), analytic, numeric)
    }


def run(seed: int = 0, points: int = 10, corrupt: bool = False, **shape) -> dict[str, float]:
    """Worst relative error per group over ``points`` random instances."""
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(points):
        for name, err in check_instance(random_instance(rng, **shape), corrupt=corrupt).items():
            worst[name] = max(worst.get(name, 0.0), err)
    return worst
