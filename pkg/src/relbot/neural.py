"""Small feed-forward network engine with a four-segment layout.

Layout of the nets built by :func:`init_net` (``m`` = input width, ``c`` = core width)::

    input       m -> m   sigmoid
    adaptation  m -> c   sigmoid
    core        c -> c   sigmoid
                c -> c   sigmoid
    output      c -> 1   linear        (regression head)
                c -> 3   logistic      (classification-3 head)

Inputs are z-scored with statistics stored on the net, so a net always sees
its own building's scaling. Regression targets can be scaled the same way.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, FormatError, TrainingError, TransferError, UnsupportedVersionError

FORMAT_NAME = "relnet"
FORMAT_VERSION = 1

SEGMENTS = ("input", "adaptation", "core", "output")
SHARED = ("input", "adaptation", "core")
HEADS = {"regression": 1, "classification-3": 3}


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str  # sigmoid | linear | logistic
    segment: str

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs_per_step: int = 1
    minibatch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs_per_step < 1 or self.minibatch_size < 1:
            raise ContractError("epochs_per_step and minibatch_size must be >= 1")


@dataclass
class SegmentedNet:
    layers: list[Layer]
    head: str
    seed: int = 0
    x_mean: np.ndarray = None
    x_scale: np.ndarray = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.head not in HEADS:
            raise ContractError(f"unknown head {self.head!r}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_size != b.in_size:
                raise ContractError(f"layer widths disagree: {a.out_size} -> {b.in_size}")
        if self.x_mean is None:
            self.x_mean = np.zeros(self.input_width)
        if self.x_scale is None:
            self.x_scale = np.ones(self.input_width)

    @property
    def input_width(self) -> int:
        return self.layers[0].in_size

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_size

    def segment(self, name: str) -> list[Layer]:
        return [l for l in self.layers if l.segment == name]

    def widths(self) -> dict[str, list[int]]:
        return {s: [l.out_size for l in self.segment(s)] for s in SEGMENTS}

    @property
    def core_width(self) -> int:
        core = self.segment("core")
        return core[-1].out_size if core else 0

    def set_input_scaling(self, mean, scale):
        mean = np.asarray(mean, dtype=float)
        scale = np.asarray(scale, dtype=float)
        if mean.shape != (self.input_width,) or scale.shape != (self.input_width,):
            raise ContractError(f"scaling vectors must have width {self.input_width}")
        self.x_mean = mean.copy()
        self.x_scale = np.where(scale > 0, scale, 1.0)

    def copy(self) -> SegmentedNet:
        return SegmentedNet(
            [Layer(l.weights.copy(), l.bias.copy(), l.activation, l.segment) for l in self.layers],
            self.head, self.seed, self.x_mean.copy(), self.x_scale.copy(),
            self.y_mean, self.y_scale, dict(self.meta))


def _uniform_layer(rng, n_in, n_out, activation, segment, gain: float = 1.0) -> Layer:
    bound = 1.0 / math.sqrt(n_in)
    if activation != "sigmoid":
        gain = 1.0
    return Layer(rng.uniform(-gain * bound, gain * bound, (n_out, n_in)), rng.uniform(-bound, bound, n_out),
                 activation, segment)


def init_net(input_width: int, core_width: int, head: str = "regression", seed: int = 0,
             gain: float = 1.0) -> SegmentedNet:
    """Four-segment net; ``gain`` widens the sigmoid layers' weight range beyond ``1/sqrt(fan_in)``."""
    if input_width < 1 or core_width < 1:
        raise ContractError(f"widths must be >= 1, got input={input_width} core={core_width}")
    if head not in HEADS:
        raise ContractError(f"unknown head {head!r}")
    rng = np.random.default_rng(seed)
    out_act = "linear" if head == "regression" else "logistic"
    layers = [
        _uniform_layer(rng, input_width, input_width, "sigmoid", "input", gain),
        _uniform_layer(rng, input_width, core_width, "sigmoid", "adaptation", gain),
        _uniform_layer(rng, core_width, core_width, "sigmoid", "core", gain),
        _uniform_layer(rng, core_width, core_width, "sigmoid", "core", gain),
        _uniform_layer(rng, core_width, HEADS[head], out_act, "output"),
    ]
    return SegmentedNet(layers, head, seed)


def init_plain_net(input_width: int, hidden_width: int | None = None, seed: int = 0,
                   gain: float = 1.0) -> SegmentedNet:
    """Regression net with two equal hidden sigmoid layers and no adaptation bottleneck."""
    if input_width < 1:
        raise ContractError(f"input width must be >= 1, got {input_width}")
    h = hidden_width or input_width
    rng = np.random.default_rng(seed)
    layers = [
        _uniform_layer(rng, input_width, h, "sigmoid", "input", gain),
        _uniform_layer(rng, h, h, "sigmoid", "core", gain),
        _uniform_layer(rng, h, 1, "linear", "output"),
    ]
    return SegmentedNet(layers, "regression", seed)


def _activate(z, activation):
    return z if activation == "linear" else sigmoid(z)


def _as_batch(net: SegmentedNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_width:
        raise ContractError(f"input width mismatch: expected {net.input_width}, got {X.shape[-1]}")
    return X, single


def _propagate(net: SegmentedNet, X: np.ndarray, stop: int | None = None) -> list[np.ndarray]:
    acts = [(X - net.x_mean) / net.x_scale]
    for layer in net.layers[:stop]:
        acts.append(_activate(acts[-1] @ layer.weights.T + layer.bias, layer.activation))
    return acts


def forward(net: SegmentedNet, x) -> np.ndarray:
    """Net output in target units; ``x`` is one input vector or a (batch, m) matrix."""
    X, single = _as_batch(net, x)
    out = _propagate(net, X)[-1]
    if net.head == "regression":
        out = out * net.y_scale + net.y_mean
    return out[0] if single else out


def trunk(net: SegmentedNet, x) -> np.ndarray:
    """Activation entering the output segment (the actor/critic shared trunk)."""
    X, single = _as_batch(net, x)
    n_out = len(net.segment("output"))
    out = _propagate(net, X, stop=len(net.layers) - n_out)[-1]
    return out[0] if single else out


def _targets(net: SegmentedNet, y, batch: int) -> np.ndarray:
    Y = np.asarray(y, dtype=float).reshape(batch, -1)
    if Y.shape[1] != net.output_width:
        raise ContractError(f"target width mismatch: expected {net.output_width}, got {Y.shape[1]}")
    if net.head == "regression":
        Y = (Y - net.y_mean) / net.y_scale
    return Y


def loss_and_grads(net: SegmentedNet, X, Y) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Batch loss and per-layer (dW, db).

    Regression: mean squared error in scaled target units, averaged over the
    batch. Classification: summed binary cross-entropy over the three logistic
    outputs, averaged over the batch.
    """
    X, _ = _as_batch(net, X)
    Y = _targets(net, Y, X.shape[0])
    acts = _propagate(net, X)
    out = acts[-1]
    n = X.shape[0]
    if net.head == "regression":
        err = out - Y
        loss = float(np.mean(np.sum(err**2, axis=1)))
        delta = 2.0 * err / n
    else:
        p = np.clip(out, 1e-12, 1 - 1e-12)
        loss = float(np.mean(np.sum(-(Y * np.log(p) + (1 - Y) * np.log(1 - p)), axis=1)))
        # d(BCE)/dz for a logistic unit is p - y
        delta = (out - Y) / n
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i:
            a = acts[i]
            delta = (delta @ layer.weights) * a * (1.0 - a)
    return loss, grads


def batch_loss(net: SegmentedNet, X, Y) -> float:
    X, _ = _as_batch(net, X)
    Y = _targets(net, Y, X.shape[0])
    out = _propagate(net, X)[-1]
    if net.head == "regression":
        return float(np.mean(np.sum((out - Y) ** 2, axis=1)))
    p = np.clip(out, 1e-12, 1 - 1e-12)
    return float(np.mean(np.sum(-(Y * np.log(p) + (1 - Y) * np.log(1 - p)), axis=1)))


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise TrainingError(f"non-finite {what}")


def sgd_update(net: SegmentedNet, X, Y, lr: float, segments: Iterable[str] | None = None) -> float:
    """One plain SGD step on a batch; returns the pre-update loss."""
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
        loss, grads = loss_and_grads(net, X, Y)
    if not math.isfinite(loss):
        raise TrainingError("loss became non-finite; reduce the learning rate")
    segs = set(segments) if segments is not None else None
    for layer, (dW, db) in zip(net.layers, grads):
        if segs is None or layer.segment in segs:
            layer.weights -= lr * dW
            layer.bias -= lr * db
    return loss


def train_step(net: SegmentedNet, batch: Sequence[tuple], cfg: TrainConfig,
               segments: Iterable[str] | None = None) -> float:
    """Train ``net`` in place on ``batch`` of (x, y) pairs.

    Runs ``cfg.epochs_per_step`` passes of minibatch SGD in batch order and
    returns the batch loss measured before the first update (target units for
    regression).
    """
    if not batch:
        raise ContractError("empty training batch")
    X = np.array([np.asarray(x, dtype=float) for x, _ in batch])
    Y = np.array([np.atleast_1d(np.asarray(y, dtype=float)) for _, y in batch])
    _check_finite(X, "training input")
    _check_finite(Y, "training target")
    segments = tuple(segments) if segments is not None else None
    single = len(X) <= cfg.minibatch_size
    pre = None if single else batch_loss(net, X, Y)
    for _ in range(cfg.epochs_per_step):
        for lo in range(0, len(X), cfg.minibatch_size):
            loss = sgd_update(net, X[lo:lo + cfg.minibatch_size], Y[lo:lo + cfg.minibatch_size],
                              cfg.learning_rate, segments)
            if pre is None:
                pre = loss
    for layer in net.layers:
        _check_finite(layer.weights, "weights after update")
    return pre * net.y_scale**2 if net.head == "regression" else pre


def copy_segment(src: SegmentedNet, dst: SegmentedNet, segment: str) -> SegmentedNet:
    """Copy weights and biases of ``segment`` (or ``all-shared``) from src into dst."""
    names = SHARED if segment == "all-shared" else (segment,)
    if segment != "all-shared" and segment not in SEGMENTS:
        raise ContractError(f"unknown segment {segment!r}")
    pairs = []
    for name in names:
        a, b = src.segment(name), dst.segment(name)
        if len(a) != len(b) or any(x.weights.shape != y.weights.shape for x, y in zip(a, b)):
            raise TransferError(
                f"segment {name!r} shapes differ: {[x.weights.shape for x in a]} vs {[y.weights.shape for y in b]}")
        pairs.extend(zip(a, b))
    for a, b in pairs:
        b.weights = a.weights.copy()
        b.bias = a.bias.copy()
    return dst


# -- persistence -------------------------------------------------------------

def net_to_dict(net: SegmentedNet) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "head": net.head,
        "seed": net.seed,
        "input_width": net.input_width,
        "widths": net.widths(),
        "scaling": {"x_mean": net.x_mean.tolist(), "x_scale": net.x_scale.tolist(),
                    "y_mean": net.y_mean, "y_scale": net.y_scale},
        "layers": [{"segment": l.segment, "activation": l.activation,
                    "weights": l.weights.tolist(), "bias": l.bias.tolist()} for l in net.layers],
        "meta": net.meta,
    }


def net_from_dict(doc: dict) -> SegmentedNet:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise FormatError("not a relnet document")
    if doc.get("version") != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported relnet version {doc.get('version')!r}")
    try:
        layers = [Layer(np.array(l["weights"], dtype=float).reshape(len(l["bias"]), -1),
                        np.array(l["bias"], dtype=float), l["activation"], l["segment"])
                  for l in doc["layers"]]
        head = doc["head"]
        sc = doc["scaling"]
        widths = doc["widths"]
        input_width = int(doc["input_width"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"truncated or malformed relnet document: {exc}") from None
    for seg in ("input", "core", "output"):
        if not any(l.segment == seg for l in layers):
            raise FormatError(f"relnet document has no {seg} segment")
    net = SegmentedNet(layers, head, doc.get("seed", 0), np.array(sc["x_mean"], dtype=float),
                       np.array(sc["x_scale"], dtype=float), float(sc["y_mean"]), float(sc["y_scale"]),
                       dict(doc.get("meta", {})))
    if net.widths() != widths or input_width != net.input_width:
        raise FormatError(f"declared widths {widths} do not match layers")
    return net


def save_net(net: SegmentedNet, path: str | Path | None = None) -> str:
    text = json.dumps(net_to_dict(net))
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_net(source: str | Path | dict) -> SegmentedNet:
    if isinstance(source, dict):
        return net_from_dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"truncated or malformed relnet document: {exc}") from None
    return net_from_dict(doc)
