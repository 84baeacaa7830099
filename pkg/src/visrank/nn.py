"""Small dense-network core with explicit reverse-mode gradients.

Activations are batched row-wise: an input of shape ``(n, in_dim)`` maps to
``(n, out_dim)``. All arithmetic is float64.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources

import numpy as np


class Dense:
    """Fully connected layer ``y = x W^T + b`` with ``W`` of shape (out, in)."""

    def __init__(self, in_dim, out_dim, rng=None, weights=None, biases=None):
        if in_dim < 1 or out_dim < 1:
            raise ValueError(f"invalid dense shape {in_dim}->{out_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        if weights is None:
            rng = np.random.default_rng() if rng is None else rng
            limit = np.sqrt(6.0 / (in_dim + out_dim))
            weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        self.weights = np.array(weights, dtype=np.float64).reshape(out_dim, in_dim)
        self.biases = (
            np.zeros(out_dim) if biases is None else np.array(biases, dtype=np.float64).reshape(out_dim)
        )

    def __repr__(self):
        return f"Dense({self.in_dim}, {self.out_dim})"

    @property
    def n_params(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim

    def params(self):
        return [self.weights, self.biases]

    def forward(self, x, train, rng):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"dimension mismatch: {self!r} got input width {x.shape[-1]}")
        return x @ self.weights.T + self.biases, x

    def backward(self, cache, grad):
        x = cache
        return [grad.T @ x, grad.sum(axis=0)], grad @ self.weights


class ReLU:
    n_params = 0

    def __repr__(self):
        return "ReLU()"

    def params(self):
        return []

    def forward(self, x, train, rng):
        mask = x > 0
        return x * mask, mask

    def backward(self, cache, grad):
        return [], grad * cache


class Dropout:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` in training."""

    n_params = 0

    def __init__(self, rate):
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def __repr__(self):
        return f"Dropout({self.rate})"

    def params(self):
        return []

    def forward(self, x, train, rng):
        if not train or self.rate == 0:
            return x, None
        scale = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * scale, scale

    def backward(self, cache, grad):
        return [], grad if cache is None else grad * cache


def forward(layers, x, train=False, rng=None):
    """Run ``x`` through ``layers``; returns the output and a tape for ``backward``."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if train and rng is None:
        raise ValueError("training mode needs an rng for dropout")
    tape = []
    for layer in layers:
        x, cache = layer.forward(x, train, rng)
        tape.append(cache)
    return (x[0] if squeeze else x), tape


def backward(layers, tape, grad):
    """Reverse pass. Returns parameter gradients (in ``params`` order) and d/dx."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.ndim == 1:
        grad = grad[None, :]
    per_layer = []
    for layer, cache in zip(reversed(layers), reversed(tape)):
        g_params, grad = layer.backward(cache, grad)
        per_layer.append(g_params)
    grads = [g for g_params in reversed(per_layer) for g in g_params]
    return grads, grad


def params(layers):
    return [p for layer in layers for p in layer.params()]


def pairwise_hinge_loss(s_pos, s_neg, margin=1.0):
    """Elementwise ``max(0, margin - (s_pos - s_neg))``."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    return np.maximum(0.0, margin - (np.asarray(s_pos) - np.asarray(s_neg)))


def pairwise_hinge_grad(s_pos, s_neg, margin=1.0):
    """Subgradient w.r.t. ``s_pos``; the gradient w.r.t. ``s_neg`` is its negation.

    Zero at the kink.
    """
    active = margin - (np.asarray(s_pos) - np.asarray(s_neg)) > 0
    return -active.astype(np.float64)


def l2_penalty(weights, lam):
    return lam * sum(float(np.sum(w * w)) for w in weights)


def l2_grad(weights, lam):
    return [2.0 * lam * w for w in weights]


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update, applied in place to ``params``."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params):
        raise ValueError("params and grads differ in length")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass(frozen=True)
class BackboneLayer:
    name: str
    kind: str
    kernel: int
    in_channels: int
    out_channels: int
    bias: bool

    @property
    def n_params(self) -> int:
        if self.kind == "conv":
            return (self.kernel ** 2 * self.in_channels + int(self.bias)) * self.out_channels
        if self.kind == "batchnorm":
            # learned scale and shift; running statistics are buffers, not parameters
            return 2 * self.out_channels
        if self.kind == "dense":
            return (self.in_channels + int(self.bias)) * self.out_channels
        raise ValueError(f"unknown layer kind {self.kind!r}")


BACKBONES = {"vgg16": "vgg16.tsv", "resnet152": "resnet152.tsv"}


def load_backbone(name):
    """Layer table of a reference convolutional backbone shipped with the package."""
    text = resources.files("visrank").joinpath("data", BACKBONES[name]).read_text()
    rows = csv.reader((ln for ln in text.splitlines() if ln and not ln.startswith("#")), delimiter="\t")
    return [
        BackboneLayer(r[0], r[1], int(r[2]), int(r[3]), int(r[4]), r[5] == "1")
        for r in rows
    ]


def count_parameters(layers) -> int:
    """Total trainable parameters of a layer stack, backbone table or architecture."""
    if hasattr(layers, "dense_shapes"):
        return sum(i * o + o for i, o in layers.dense_shapes())
    return sum(layer.n_params for layer in layers)
