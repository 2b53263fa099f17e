"""Fully connected ReLU encoder feeding the MTLR head, with hand-written backprop."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    relu: bool = True


@dataclass(frozen=True)
class FusedInput:
    """Clinical features, optionally followed by a precomputed image embedding."""

    clinical: np.ndarray
    image_features: np.ndarray | None = None

    def vector(self) -> np.ndarray:
        parts = [np.asarray(self.clinical, dtype=np.float64).ravel()]
        if self.image_features is not None:
            parts.append(np.asarray(self.image_features, dtype=np.float64).ravel())
        return np.concatenate(parts)


def fuse(clinical, image_features=None) -> np.ndarray:
    """Row-wise concatenation of feature blocks (batch form of ``FusedInput``)."""
    clinical = np.atleast_2d(np.asarray(clinical, dtype=np.float64))
    if image_features is None:
        return clinical
    return np.hstack([clinical, np.atleast_2d(np.asarray(image_features, dtype=np.float64))])


@dataclass(frozen=True)
class EncoderNet:
    """A chain of affine layers; an empty chain is the identity map."""

    layers: tuple[Layer, ...]
    input_dim: int

    def __post_init__(self):
        width = self.input_dim
        for n, layer in enumerate(self.layers):
            w = np.asarray(layer.weight, dtype=np.float64)
            if w.ndim != 2 or w.shape[1] != width or np.shape(layer.bias) != (w.shape[0],):
                raise ValueError(f"layer {n} does not chain: expects input {width}, weight {w.shape}")
            width = w.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0] if self.layers else self.input_dim

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(layer.weight.shape[0] for layer in self.layers)

    @classmethod
    def identity(cls, dim: int, explicit: bool = False) -> "EncoderNet":
        """No-op encoder; ``explicit`` makes it one identity-activation layer with W = I."""
        if not explicit:
            return cls((), dim)
        return cls((Layer(np.eye(dim), np.zeros(dim), relu=False),), dim)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def with_parameters(self, params: Sequence[np.ndarray]) -> "EncoderNet":
        if len(params) != 2 * len(self.layers):
            raise ValueError("parameter list does not match the layer count")
        layers = tuple(
            Layer(np.array(params[2 * n], dtype=np.float64), np.array(params[2 * n + 1], dtype=np.float64), layer.relu)
            for n, layer in enumerate(self.layers)
        )
        return EncoderNet(layers, self.input_dim)

    def forward_batch(self, X):
        """Return ``(output, cache)``; the cache holds every layer's input and pre-activation."""
        h = np.asarray(X, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ValueError(f"expected inputs of width {self.input_dim}, got shape {h.shape}")
        cache = []
        for layer in self.layers:
            z = h @ layer.weight.T + layer.bias
            cache.append((h, z))
            h = np.maximum(z, 0.0) if layer.relu else z
        return h, cache

    def backward_batch(self, cache, upstream):
        """Backpropagate ``upstream`` (N, output_dim) through the cached pass.

        Returns ``(d_inputs, param_grads)`` with gradients summed over the batch,
        laid out like ``parameters()``. ReLU has derivative 0 at exactly 0.
        """
        g = np.asarray(upstream, dtype=np.float64)
        grads = []
        for layer, (h, z) in zip(reversed(self.layers), reversed(cache)):
            if layer.relu:
                g = g * (z > 0)
            grads.append(g.sum(axis=0))
            grads.append(g.T @ h)
            g = g @ layer.weight
        grads.reverse()
        return g, grads


def forward(net: EncoderNet, fused) -> np.ndarray:
    x = fused.vector() if isinstance(fused, FusedInput) else np.asarray(fused, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"expected a {net.input_dim}-vector, got shape {x.shape}")
    out, _ = net.forward_batch(x[None, :])
    return out[0]


def backward(net: EncoderNet, fused, upstream):
    """Input gradient and per-parameter gradients for one sample."""
    x = fused.vector() if isinstance(fused, FusedInput) else np.asarray(fused, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != (net.input_dim,) or upstream.shape != (net.output_dim,):
        raise ValueError("input or upstream gradient has the wrong dimension")
    _, cache = net.forward_batch(x[None, :])
    d_input, grads = net.backward_batch(cache, upstream[None, :])
    return d_input[0], grads


def init(dims: Sequence[int], seed=None, relu_last: bool = True) -> EncoderNet:
    """Layers of sizes ``dims[0] -> dims[1] -> ...``, weights ~ U(+-sqrt(6 / fan_in)), zero biases."""
    if len(dims) < 1:
        raise ValueError("need at least an input dimension")
    if any(int(d) < 1 for d in dims):
        raise ValueError(f"layer sizes must be positive, got {tuple(dims)}")
    rng = np.random.default_rng(seed)
    layers = []
    for n, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        last = n == len(dims) - 2
        layers.append(Layer(w, np.zeros(fan_out), relu=relu_last or not last))
    return EncoderNet(tuple(layers), int(dims[0]))
