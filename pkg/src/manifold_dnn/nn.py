"""Dense ReLU feedforward networks: forward pass, exact reverse-mode
gradients, losses, and the Adam optimizer.

This is the Euclidean engine every manifold model composes with. All
arithmetic is in 64-bit floats. Parameter records are plain values and no
function mutates its inputs, so parameters can be shared across threads
for read-only evaluation; training loops own a single copy and replace it
step by step.

Checkpoint format (stable): a JSON document

    {"format": "dense-relu-checkpoint-v1",
     "widths": [p0, ..., pL+1],
     "layers": [{"weights": [[...], ...], "bias": [...]}, ...]}

with one entry per affine layer and weight matrices stored row-major
(``weights[i][j]`` multiplies coordinate ``j`` of the layer input).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericError, ShapeError, SpecError

CHECKPOINT_FORMAT = "dense-relu-checkpoint-v1"


class LossKind(Enum):
    """Training objectives: squared error for scalar regression, softmax
    cross-entropy for classification."""

    SQUARED_ERROR = "squared-error"
    CROSS_ENTROPY = "cross-entropy"

    @classmethod
    def from_name(cls, name: str) -> "LossKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise SpecError(f"unknown loss kind {name!r}")


@dataclass
class NetworkParams:
    """Weights and biases of a dense ReLU network.

    ``widths`` is ``(p_0, ..., p_{L+1})`` with L hidden layers. Affine layer
    ``l`` maps ``a -> W_l a + b_l`` with ``W_l`` of shape
    ``(p_l, p_{l-1})``; ReLU follows every affine layer except the last.
    """

    widths: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_affine(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            widths=tuple(self.widths),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class Gradients:
    """Loss gradients, mirroring the shapes of :class:`NetworkParams`."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "Gradients":
        return cls(
            weights=[np.zeros_like(w) for w in params.weights],
            biases=[np.zeros_like(b) for b in params.biases],
        )

    def add_(self, other: "Gradients") -> "Gradients":
        for w, ow in zip(self.weights, other.weights):
            w += ow
        for b, ob in zip(self.biases, other.biases):
            b += ob
        return self


def init_network(widths: Sequence[int], seed: int) -> NetworkParams:
    """He-scaled random weights (std ``sqrt(2/fan_in)``), zero biases.

    Deterministic given ``seed``. Requires at least one hidden layer and
    every width >= 1.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 3:
        raise SpecError(
            f"need at least one hidden layer, got widths {widths}"
        )
    if any(w < 1 for w in widths):
        raise SpecError(f"every layer width must be >= 1, got {widths}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(widths=widths, weights=weights, biases=biases)


def _check_input(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.input_dim:
        raise ShapeError(
            f"input of shape {x.shape} does not match network input width "
            f"{params.input_dim}"
        )
    return x


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a vector ``(p_0,)`` or a batch ``(n, p_0)``.

    Applies the affine maps with elementwise ``max(0, .)`` between them and
    no activation after the final affine map.
    """
    x = _check_input(params, x)
    single = x.ndim == 1
    a = x[None, :] if single else x
    last = params.n_affine - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w.T + b
        if l != last:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def forward_cached(params: NetworkParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Batch forward pass returning (outputs, post-activation cache).

    The cache holds ``[a_0=x, a_1, ..., a_L]`` (inputs to each affine
    layer); the ReLU mask is recovered as ``a_l > 0``, which encodes the
    subgradient-0-at-0 convention.
    """
    x = _check_input(params, x)
    if x.ndim == 1:
        x = x[None, :]
    acts = [x]
    a = x
    last = params.n_affine - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w.T + b
        if l != last:
            a = np.maximum(a, 0.0)
            acts.append(a)
    return a, acts


def backprop(params: NetworkParams, acts: list[np.ndarray], d_out: np.ndarray) -> Gradients:
    """Reverse-mode pass from an output gradient ``d_out`` of shape
    ``(n, p_{L+1})`` through the cached forward pass."""
    grads_w: list[np.ndarray] = [None] * params.n_affine  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * params.n_affine  # type: ignore[list-item]
    delta = d_out
    for l in range(params.n_affine - 1, -1, -1):
        grads_w[l] = delta.T @ acts[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * (acts[l] > 0.0)
    return Gradients(weights=grads_w, biases=grads_b)


def backprop_input(
    params: NetworkParams, acts: list[np.ndarray], d_out: np.ndarray
) -> tuple[Gradients, np.ndarray]:
    """Like :func:`backprop`, but also returns the loss gradient with
    respect to the network input (used when the features feeding the
    network are themselves differentiable)."""
    grads = backprop(params, acts, d_out)
    delta = d_out
    for l in range(params.n_affine - 1, 0, -1):
        delta = (delta @ params.weights[l]) * (acts[l] > 0.0)
    return grads, delta @ params.weights[0]


def loss_and_output_grad(
    outputs: np.ndarray, targets: np.ndarray, loss: LossKind
) -> tuple[float, np.ndarray]:
    """Mean-over-batch loss and its gradient with respect to the raw
    network outputs."""
    n = outputs.shape[0]
    if n == 0:
        raise ShapeError("empty batch")
    if loss is LossKind.SQUARED_ERROR:
        if outputs.shape[1] != 1:
            raise SpecError(
                "squared-error loss requires scalar network output, got "
                f"width {outputs.shape[1]}"
            )
        y = np.asarray(targets, dtype=np.float64).reshape(n)
        resid = outputs[:, 0] - y
        value = float(np.mean(resid**2))
        return value, (2.0 / n) * resid[:, None]
    if loss is LossKind.CROSS_ENTROPY:
        n_classes = outputs.shape[1]
        if n_classes < 2:
            raise SpecError("cross-entropy requires output width >= 2")
        y = np.asarray(targets)
        if y.shape != (n,):
            raise ShapeError(f"targets of shape {y.shape} for batch of {n}")
        y = y.astype(np.int64)
        if y.min() < 0 or y.max() >= n_classes:
            raise SpecError(
                f"class labels must lie in [0, {n_classes}), got range "
                f"[{y.min()}, {y.max()}]"
            )
        shifted = outputs - outputs.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        value = float(-np.mean(np.log(probs[np.arange(n), y])))
        d_out = probs.copy()
        d_out[np.arange(n), y] -= 1.0
        return value, d_out / n
    raise SpecError(f"unsupported loss kind {loss}")


def backward(
    params: NetworkParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss: LossKind,
) -> tuple[Gradients, float]:
    """Mean batch loss and its exact gradient in the network parameters."""
    inputs = _check_input(params, inputs)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.shape[0] == 0:
        raise ShapeError("empty batch")
    outputs, acts = forward_cached(params, inputs)
    value, d_out = loss_and_output_grad(outputs, targets, loss)
    return backprop(params, acts, d_out), value


@dataclass
class AdamState:
    """First/second-moment accumulators plus step counter and
    hyperparameters for the Adam update."""

    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float


def init_adam(
    params: NetworkParams,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    return AdamState(
        m_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_weights=[np.zeros_like(w) for w in params.weights],
        v_biases=[np.zeros_like(b) for b in params.biases],
        step=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(
    params: NetworkParams, grads: Gradients, state: AdamState
) -> tuple[NetworkParams, AdamState]:
    """One Adam update with bias correction; returns new params and state."""
    for l, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError(f"non-finite gradient in layer {l}")
    t = state.step + 1
    b1, b2, lr, eps = state.beta1, state.beta2, state.learning_rate, state.epsilon
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_w, new_b = [], []
    m_w, m_b, v_w, v_b = [], [], [], []
    for w, b, gw, gb, mw, mb, vw, vb in zip(
        params.weights,
        params.biases,
        grads.weights,
        grads.biases,
        state.m_weights,
        state.m_biases,
        state.v_weights,
        state.v_biases,
    ):
        mw = b1 * mw + (1.0 - b1) * gw
        vw = b2 * vw + (1.0 - b2) * gw**2
        mb = b1 * mb + (1.0 - b1) * gb
        vb = b2 * vb + (1.0 - b2) * gb**2
        new_w.append(w - lr * (mw / c1) / (np.sqrt(vw / c2) + eps))
        new_b.append(b - lr * (mb / c1) / (np.sqrt(vb / c2) + eps))
        m_w.append(mw)
        m_b.append(mb)
        v_w.append(vw)
        v_b.append(vb)
    new_params = NetworkParams(widths=params.widths, weights=new_w, biases=new_b)
    new_state = AdamState(
        m_weights=m_w,
        m_biases=m_b,
        v_weights=v_w,
        v_biases=v_b,
        step=t,
        learning_rate=lr,
        beta1=b1,
        beta2=b2,
        epsilon=eps,
    )
    return new_params, new_state


def sparsity_report(params: NetworkParams) -> tuple[int, float]:
    """Exact count of nonzero parameters and the max absolute value.

    With He initialization the max-abs is, with overwhelming probability,
    below ``8 * sqrt(2 / min fan_in)``; checked statistically in tests.
    """
    count = 0
    max_abs = 0.0
    for arr in list(params.weights) + list(params.biases):
        count += int(np.count_nonzero(arr))
        if arr.size:
            max_abs = max(max_abs, float(np.max(np.abs(arr))))
    return count, max_abs


def save_checkpoint(params: NetworkParams, path: str | Path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "widths": list(params.widths),
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: str | Path) -> NetworkParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise SpecError(f"unrecognized checkpoint format in {path}")
    widths = tuple(int(w) for w in doc["widths"])
    weights = [np.asarray(layer["weights"], dtype=np.float64) for layer in doc["layers"]]
    biases = [np.asarray(layer["bias"], dtype=np.float64) for layer in doc["layers"]]
    params = NetworkParams(widths=widths, weights=weights, biases=biases)
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        if w.shape != (widths[l + 1], widths[l]) or b.shape != (widths[l + 1],):
            raise ShapeError(f"checkpoint layer {l} does not conform to widths {widths}")
    return params
