"""Tapped-delay multilayer perceptron: buffer, forward pass, exact derivatives.

The network maps a window of recent measurement samples

    [y(t), y(t-T), ..., y(t-m*T)]    (current sample first, T = control period)

through affine layers plus activations to a state estimate.  Input windows
are standardized per channel with (mean, std) stored inside the network
record, so a deployed network carries its own normalization.

Parameter flattening (used by the trainers and the weight Jacobian) is
layer-major: for each layer in order, the weight matrix row-major, then the
bias vector.  ``flatten_params``/``set_params`` round-trip exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Activation(Enum):
    """Per-layer activation: value and derivative as functions of pre-activation."""

    TANSIG = "tansig"
    LOGSIG = "logsig"
    PURELIN = "purelin"

    @classmethod
    def from_name(cls, name: str) -> "Activation":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown activation {name!r} (expected one of: {valid})") from None

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.TANSIG:
            return np.tanh(z)
        if self is Activation.LOGSIG:
            return 1.0 / (1.0 + np.exp(-z))
        return np.asarray(z, dtype=float)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.TANSIG:
            t = np.tanh(z)
            return 1.0 - t * t
        if self is Activation.LOGSIG:
            s = 1.0 / (1.0 + np.exp(-z))
            return s * (1.0 - s)
        return np.ones_like(np.asarray(z, dtype=float))


@dataclass(frozen=True)
class Layer:
    """One affine layer: z = w @ a_prev + b, a = f(z).  w has shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: Activation

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValueError(f"layer shape mismatch: w{w.shape} b{b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer weights must be finite")
        object.__setattr__(self, "weights", w.copy())
        object.__setattr__(self, "bias", b.copy())


@dataclass
class Mlp:
    """Layered perceptron with input normalization and free-form metadata.

    ``meta`` carries deployment info (channel selection, memory depth) that
    travels with the serialized network; it does not affect the forward pass.
    """

    layers: list[Layer]
    input_mean: np.ndarray = None
    input_std: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise ValueError(
                    f"layer widths do not chain: {prev.weights.shape} -> {nxt.weights.shape}"
                )
        width = self.layers[0].weights.shape[1]
        if self.input_mean is None:
            self.input_mean = np.zeros(width)
        if self.input_std is None:
            self.input_std = np.ones(width)
        self.input_mean = np.asarray(self.input_mean, dtype=float).reshape(width).copy()
        self.input_std = np.asarray(self.input_std, dtype=float).reshape(width).copy()
        if np.any(self.input_std <= 0.0):
            raise ValueError("input std must be strictly positive")

    @property
    def input_width(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_width(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def n_params(self) -> int:
        return sum(layer.weights.size + layer.bias.size for layer in self.layers)

    def copy(self) -> "Mlp":
        return Mlp(
            [Layer(l.weights, l.bias, l.activation) for l in self.layers],
            self.input_mean,
            self.input_std,
            dict(self.meta),
        )


def init_mlp(layer_widths: list[int], activations: list[Activation | str], seed: int,
             input_mean=None, input_std=None, meta=None) -> Mlp:
    """Seeded network: uniform [-0.5, 0.5] scaled by 1/sqrt(fan-in) per layer.

    ``layer_widths`` is [input, hidden..., output]; ``activations`` has one
    entry per layer after the input.
    """
    if len(layer_widths) < 2:
        raise ValueError("need at least input and output widths")
    if len(activations) != len(layer_widths) - 1:
        raise ValueError("one activation per layer required")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(layer_widths, layer_widths[1:], activations):
        act = act if isinstance(act, Activation) else Activation.from_name(act)
        scale = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-0.5, 0.5, size=(fan_out, fan_in)) * scale
        b = rng.uniform(-0.5, 0.5, size=fan_out) * scale
        layers.append(Layer(w, b, act))
    return Mlp(layers, input_mean, input_std, dict(meta or {}))


class TappedDelayBuffer:
    """Sliding window over recent measurement samples (single-owner, mutable).

    The emitted window stacks whole samples newest-first:
    [y(k), y(k-1), ..., y(k-depth)], length channels * (depth + 1).  Slots
    that have not been filled yet read as zero (the at-rest startup
    convention shared by training and inference).
    """

    def __init__(self, memory_depth: int, channels: int):
        if memory_depth < 0:
            raise ValueError(f"memory depth must be >= 0, got {memory_depth}")
        if channels < 1:
            raise ValueError(f"need at least one channel, got {channels}")
        self.memory_depth = memory_depth
        self.channels = channels
        self._window = np.zeros((memory_depth + 1) * channels)
        self.fill_count = 0

    @property
    def window_length(self) -> int:
        return self._window.size

    def push(self, sample) -> np.ndarray:
        """Insert a sample, evict the oldest, return a copy of the window."""
        sample = np.asarray(sample, dtype=float).reshape(-1)
        if sample.size != self.channels:
            raise ValueError(f"sample width {sample.size} != channels {self.channels}")
        self._window[self.channels:] = self._window[:-self.channels]
        self._window[:self.channels] = sample
        self.fill_count = min(self.fill_count + 1, self.memory_depth + 1)
        return self._window.copy()

    def reset(self) -> None:
        self._window[:] = 0.0
        self.fill_count = 0


def buffer_push(buf: TappedDelayBuffer, sample) -> np.ndarray:
    return buf.push(sample)


def _normalize(net: Mlp, window: np.ndarray) -> np.ndarray:
    return (window - net.input_mean) / net.input_std


def forward(net: Mlp, window) -> np.ndarray:
    """State estimate for one window (normalization applied internally)."""
    window = np.asarray(window, dtype=float).reshape(-1)
    if window.size != net.input_width:
        raise ValueError(f"window length {window.size} != input width {net.input_width}")
    a = _normalize(net, window)
    for layer in net.layers:
        a = layer.activation.apply(layer.weights @ a + layer.bias)
    return a


def forward_batch(net: Mlp, windows: np.ndarray) -> np.ndarray:
    """Vectorized forward over rows of ``windows`` (n, input_width)."""
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 2 or windows.shape[1] != net.input_width:
        raise ValueError(f"expected (n, {net.input_width}) windows, got {windows.shape}")
    a = (windows - net.input_mean) / net.input_std
    for layer in net.layers:
        a = layer.activation.apply(a @ layer.weights.T + layer.bias)
    return a


def forward_with_cache(net: Mlp, window):
    """Forward pass returning (estimate, cache) for exact backpropagation.

    cache = (normalized input, [pre-activations per layer], [activations per
    layer]); replaying the cache reproduces the output without the weights.
    """
    window = np.asarray(window, dtype=float).reshape(-1)
    if window.size != net.input_width:
        raise ValueError(f"window length {window.size} != input width {net.input_width}")
    a = _normalize(net, window)
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []
    x = a
    for layer in net.layers:
        z = layer.weights @ x + layer.bias
        x = layer.activation.apply(z)
        pre.append(z)
        post.append(x)
    return post[-1].copy(), (a, pre, post)


def flatten_params(net: Mlp) -> np.ndarray:
    """All weights and biases as one vector (layer-major, row-major, then bias)."""
    parts = []
    for layer in net.layers:
        parts.append(layer.weights.reshape(-1))
        parts.append(layer.bias)
    return np.concatenate(parts)


def set_params(net: Mlp, theta: np.ndarray) -> Mlp:
    """New network with the same shape and parameters taken from ``theta``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != net.n_params:
        raise ValueError(f"parameter vector length {theta.size} != {net.n_params}")
    layers = []
    pos = 0
    for layer in net.layers:
        nw = layer.weights.size
        w = theta[pos:pos + nw].reshape(layer.weights.shape)
        pos += nw
        nb = layer.bias.size
        b = theta[pos:pos + nb]
        pos += nb
        layers.append(Layer(w, b, layer.activation))
    return Mlp(layers, net.input_mean, net.input_std, dict(net.meta))


def output_jacobian_wrt_weights(net: Mlp, window) -> np.ndarray:
    """Exact reverse-mode Jacobian d(output) / d(theta), shape (out, n_params).

    Column order follows flatten_params.  Normalization constants are part of
    the input path, not of theta.
    """
    _, (a0, pre, post) = forward_with_cache(net, window)
    n_layers = len(net.layers)
    out_w = net.output_width

    # g[l] = d(output) / d(z_l), built backwards from the output layer
    g = [None] * n_layers
    g[-1] = np.diag(net.layers[-1].activation.derivative(pre[-1]))
    for l in range(n_layers - 2, -1, -1):
        g[l] = (g[l + 1] @ net.layers[l + 1].weights) * net.layers[l].activation.derivative(pre[l])

    blocks = []
    for l, layer in enumerate(net.layers):
        a_prev = a0 if l == 0 else post[l - 1]
        # d out_s / d w_ij = g[l][s, i] * a_prev[j], row-major over (i, j)
        dw = g[l][:, :, None] * a_prev[None, None, :]
        blocks.append(dw.reshape(out_w, -1))
        blocks.append(g[l])
    return np.concatenate(blocks, axis=1)


def batch_jacobian(net: Mlp, windows: np.ndarray):
    """Jacobians and outputs for a batch: returns (outputs (n,S), J (n,S,P)).

    Same values as per-window output_jacobian_wrt_weights, vectorized; used
    by the Newton and Levenberg-Marquardt trainers.
    """
    windows = np.asarray(windows, dtype=float)
    n = windows.shape[0]
    a = (windows - net.input_mean) / net.input_std
    pre = []
    post = []
    x = a
    for layer in net.layers:
        z = x @ layer.weights.T + layer.bias
        x = layer.activation.apply(z)
        pre.append(z)
        post.append(x)
    outputs = post[-1]
    s = net.output_width
    n_layers = len(net.layers)

    g = [None] * n_layers
    eye = np.eye(s)
    g[-1] = eye[None, :, :] * net.layers[-1].activation.derivative(pre[-1])[:, None, :]
    for l in range(n_layers - 2, -1, -1):
        g[l] = (g[l + 1] @ net.layers[l + 1].weights) * net.layers[l].activation.derivative(pre[l])[:, None, :]

    blocks = []
    for l, layer in enumerate(net.layers):
        a_prev = a if l == 0 else post[l - 1]
        dw = g[l][:, :, :, None] * a_prev[:, None, None, :]
        blocks.append(dw.reshape(n, s, -1))
        blocks.append(g[l])
    return outputs, np.concatenate(blocks, axis=2)


# --------------------------------------------------------------------------
# Serialization: versioned flat text, exact round-trip for finite values.
# --------------------------------------------------------------------------

_FORMAT_TAG = "gyrostab-mlp 1"


def _fmt(values: np.ndarray) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(values, dtype=float).reshape(-1))


def save_mlp(path, net: Mlp) -> None:
    """Write the network as versioned flat text (17 significant digits)."""
    lines = [_FORMAT_TAG]
    widths = [net.input_width] + [layer.weights.shape[0] for layer in net.layers]
    lines.append("sizes " + " ".join(str(w) for w in widths))
    lines.append("activations " + " ".join(layer.activation.value for layer in net.layers))
    lines.append("norm_mean " + _fmt(net.input_mean))
    lines.append("norm_std " + _fmt(net.input_std))
    for key in sorted(net.meta):
        lines.append(f"meta {key} {net.meta[key]}")
    for idx, layer in enumerate(net.layers, start=1):
        lines.append(f"w {idx} " + _fmt(layer.weights))
        lines.append(f"b {idx} " + _fmt(layer.bias))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mlp(path) -> Mlp:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != _FORMAT_TAG:
        raise ValueError(f"{path}: not a {_FORMAT_TAG!r} file")

    fields: dict[str, str] = {}
    meta: dict[str, str] = {}
    tensors: dict[str, str] = {}
    for line in lines[1:]:
        head, _, rest = line.partition(" ")
        if head in ("sizes", "activations", "norm_mean", "norm_std"):
            fields[head] = rest
        elif head == "meta":
            key, _, value = rest.partition(" ")
            meta[key] = value
        elif head in ("w", "b"):
            idx, _, payload = rest.partition(" ")
            tensors[f"{head}{idx}"] = payload
        else:
            raise ValueError(f"{path}: unexpected record {head!r}")

    for need in ("sizes", "activations", "norm_mean", "norm_std"):
        if need not in fields:
            raise ValueError(f"{path}: missing {need!r} record")
    widths = [int(tok) for tok in fields["sizes"].split()]
    acts = [Activation.from_name(tok) for tok in fields["activations"].split()]
    if len(acts) != len(widths) - 1:
        raise ValueError(f"{path}: {len(widths)} sizes need {len(widths) - 1} activations")

    def floats(text: str) -> np.ndarray:
        return np.array([float(tok) for tok in text.split()])

    layers = []
    for i, act in enumerate(acts, start=1):
        fan_out, fan_in = widths[i], widths[i - 1]
        try:
            w = floats(tensors[f"w{i}"]).reshape(fan_out, fan_in)
            b = floats(tensors[f"b{i}"]).reshape(fan_out)
        except KeyError as exc:
            raise ValueError(f"{path}: missing tensor for layer {i}") from exc
        layers.append(Layer(w, b, act))
    return Mlp(layers, floats(fields["norm_mean"]), floats(fields["norm_std"]), meta)
