"""SPD matrix network layers with exact eigendecomposition backprop.

The stack alternates bilinear dimension reduction with eigenvalue
flooring, then flattens through a matrix-log map into a dense ReLU tail:

* BiMap:  P -> W^T P W with W semi-orthogonal (columns orthonormal),
  trained on the Stiefel manifold by projected gradient + QR retraction.
* ReEig:  P -> U max(S, eps I) U^T, an eigenvalue rectifier.
* terminal map: either the matrix log at the identity (vectorized
  ``logm P``), or tangent coordinates at a base point under the
  log-Euclidean or affine metric. With a tangent terminal the base point
  is the Fréchet mean of the current training batch, and the mean of the
  full training set is frozen in for evaluation.

Gradients through any spectral map F(P) = U f(S) U^T use the structured
derivative dF = U (K o (U^T dP U)) U^T with K_ij the divided difference
(f(s_i) - f(s_j)) / (s_i - s_j) off the diagonal and f'(s_i) on it;
eigenvalue pairs closer than ``GAP_TOL`` fall back to the derivative at
the pair midpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import NumericError, ShapeError, SpecError
from .manifolds import frechet_mean, spd_invsqrt, sym_dim, sym_unvec, sym_vec
from .manifolds.spd import EIG_FLOOR

GAP_TOL = 1e-10

SPDNET_FORMAT = "spdnet-checkpoint-v1"


@dataclass
class BiMapLayer:
    """Semi-orthogonal bilinear reduction W^T P W, p_out <= p_in."""

    weight: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        p_in, p_out = self.weight.shape
        if p_out > p_in:
            raise SpecError("BiMap cannot increase the matrix dimension")
        gram = self.weight.T @ self.weight
        if np.max(np.abs(gram - np.eye(p_out))) > 1e-8:
            raise SpecError("BiMap weight columns are not orthonormal")


@dataclass
class ReEigLayer:
    """Eigenvalue floor; keeps matrices safely positive definite."""

    epsilon: float = 1e-4

    def __post_init__(self):
        if self.epsilon <= 0:
            raise SpecError("ReEig epsilon must be positive")


def init_bimap(p_in: int, p_out: int, rng: np.random.Generator) -> BiMapLayer:
    q, r = np.linalg.qr(rng.standard_normal((p_in, p_out)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return BiMapLayer(weight=q)


def _sym(ps: np.ndarray) -> np.ndarray:
    return 0.5 * (ps + np.swapaxes(ps, -1, -2))


def bimap_forward(layer: BiMapLayer, ps: np.ndarray) -> np.ndarray:
    ps = np.asarray(ps, dtype=np.float64)
    if ps.shape[-1] != layer.weight.shape[0]:
        raise ShapeError(
            f"BiMap expects {layer.weight.shape[0]}x{layer.weight.shape[0]} "
            f"input, got {ps.shape}"
        )
    return layer.weight.T @ ps @ layer.weight


def bimap_backward(
    layer: BiMapLayer, ps: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Input and weight gradients; ``ps`` is the stacked layer input."""
    g = _sym(grad_out)
    grad_p = layer.weight @ g @ layer.weight.T
    grad_w = 2.0 * np.sum(ps @ layer.weight @ g, axis=0)
    return grad_p, grad_w


def reeig_forward(
    layer: ReEigLayer, ps: np.ndarray
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Returns the floored stack and the (eigenvalues, eigenvectors) cache."""
    s, u = np.linalg.eigh(_sym(np.asarray(ps, dtype=np.float64)))
    out = (u * np.maximum(s, layer.epsilon)[..., None, :]) @ np.swapaxes(u, -1, -2)
    return out, (s, u)


def _spectral_backward(s, u, grad_out, fn, dfn) -> np.ndarray:
    """Adjoint of P -> U f(S) U^T from the cached eigendecomposition."""
    g = _sym(grad_out)
    fs = fn(s)
    num = fs[..., :, None] - fs[..., None, :]
    den = s[..., :, None] - s[..., None, :]
    small = np.abs(den) < GAP_TOL
    mid = 0.5 * (s[..., :, None] + s[..., None, :])
    k = np.where(small, dfn(mid), num / np.where(small, 1.0, den))
    m = np.swapaxes(u, -1, -2) @ g @ u
    out = u @ (k * m) @ np.swapaxes(u, -1, -2)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite gradient through spectral layer")
    return out


def reeig_backward(layer: ReEigLayer, cache, grad_out: np.ndarray) -> np.ndarray:
    s, u = cache
    eps = layer.epsilon
    return _spectral_backward(
        s, u, grad_out,
        fn=lambda t: np.maximum(t, eps),
        dfn=lambda t: (t > eps).astype(np.float64),
    )


def logeig_forward(ps: np.ndarray) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Vectorized matrix log; identical to the SPD embedding."""
    ps = _sym(np.asarray(ps, dtype=np.float64))
    s, u = np.linalg.eigh(ps)
    scale = np.maximum(np.linalg.norm(ps, axis=(-2, -1)), 1e-300)
    s = np.maximum(s, EIG_FLOOR * scale[..., None])
    logp = (u * np.log(s)[..., None, :]) @ np.swapaxes(u, -1, -2)
    return sym_vec(logp), (s, u)


def logeig_backward(cache, grad_feats: np.ndarray) -> np.ndarray:
    s, u = cache
    d = s.shape[-1]
    g = sym_unvec(grad_feats, d)
    return _spectral_backward(s, u, g, fn=np.log, dfn=lambda t: 1.0 / t)


def stiefel_update(layer: BiMapLayer, grad: np.ndarray, lr: float) -> BiMapLayer:
    """Project the Euclidean gradient to the Stiefel tangent space, step,
    and retract by QR with a sign-fixed R diagonal."""
    w = layer.weight
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != w.shape:
        raise ShapeError("gradient shape does not match BiMap weight")
    wg = w.T @ grad
    tangent = grad - w @ (0.5 * (wg + wg.T))
    q, r = np.linalg.qr(w - lr * tangent)
    diag = np.diag(r)
    if np.min(np.abs(diag)) < 1e-12:
        raise NumericError("rank-deficient retraction in Stiefel update")
    q = q * np.where(diag < 0, -1.0, 1.0)
    return BiMapLayer(weight=q)


# ---------------------------------------------------------------------------
# full model

@dataclass
class SPDNetModel:
    """Alternating BiMap/ReEig stack, terminal map, and dense tail.

    ``terminal`` is ``"logeig"`` (log map at the identity),
    ``"tangent-log"`` or ``"tangent-affine"`` (log map at ``base``).
    """

    bimaps: list[BiMapLayer]
    reeigs: list[ReEigLayer]
    terminal: str
    net: nn.NetworkParams
    base: np.ndarray | None = None

    def __post_init__(self):
        if self.terminal not in ("logeig", "tangent-log", "tangent-affine"):
            raise SpecError(f"unknown terminal map {self.terminal!r}")
        if len(self.bimaps) != len(self.reeigs):
            raise SpecError("BiMap and ReEig layers must alternate")

    @property
    def manifold(self) -> str:
        return f"spd-{self.bimaps[0].weight.shape[0]}"

    @property
    def out_dim(self) -> int:
        return self.bimaps[-1].weight.shape[1] if self.bimaps else 0

    def copy(self):
        return SPDNetModel(
            bimaps=[BiMapLayer(b.weight.copy()) for b in self.bimaps],
            reeigs=[ReEigLayer(r.epsilon) for r in self.reeigs],
            terminal=self.terminal,
            net=self.net.copy(),
            base=None if self.base is None else self.base.copy(),
        )


def build_spdnet(
    dims,
    hidden,
    out_width: int,
    seed: int,
    terminal: str = "logeig",
    reeig_eps: float = 1e-4,
) -> SPDNetModel:
    """``dims = (d_0, d_1, ..., d_J)`` gives J BiMap+ReEig pairs shrinking
    d_0 x d_0 inputs to d_J x d_J before the terminal map."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 1 or any(d < 1 for d in dims):
        raise SpecError(f"invalid dimension chain {dims}")
    rng = np.random.default_rng(seed)
    bimaps = [init_bimap(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
    reeigs = [ReEigLayer(reeig_eps) for _ in bimaps]
    net = nn.init_network((sym_dim(dims[-1]), *hidden, out_width), seed + 1)
    return SPDNetModel(bimaps=bimaps, reeigs=reeigs, terminal=terminal, net=net)


def stack_forward(model: SPDNetModel, ps: np.ndarray):
    """Run the BiMap/ReEig stack; returns the output stack and caches."""
    ps = np.asarray(ps, dtype=np.float64)
    single = ps.ndim == 2
    cur = ps[None] if single else ps
    caches = []
    for bimap, reeig in zip(model.bimaps, model.reeigs):
        inp = cur
        mapped = bimap_forward(bimap, inp)
        cur, eig = reeig_forward(reeig, mapped)
        caches.append((inp, eig))
    return (cur[0] if single else cur), caches


def terminal_features(model: SPDNetModel, ps: np.ndarray, base: np.ndarray | None):
    """Feature vectors from the stack output, plus the eig cache and the
    whitening matrix used (None unless the affine terminal is active)."""
    if model.terminal == "logeig":
        feats, eig = logeig_forward(ps)
        return feats, eig, None
    if base is None:
        raise SpecError(
            "tangent terminal needs a base point (train first or pass one)"
        )
    if model.terminal == "tangent-log":
        feats, eig = logeig_forward(ps)
        feats = feats - sym_vec(_logm_single(base))[None, :]
        return feats, eig, None
    isq = spd_invsqrt(base)
    whitened = isq[None] @ ps @ isq[None]
    feats, eig = logeig_forward(whitened)
    return feats, eig, isq


def _logm_single(p: np.ndarray) -> np.ndarray:
    from .manifolds import spd_logm

    return spd_logm(p)


def batch_base(model: SPDNetModel, stack_out: np.ndarray) -> np.ndarray | None:
    """Fréchet mean of the stack outputs under the terminal's metric."""
    if model.terminal == "logeig":
        return None
    metric = "log-euclidean" if model.terminal == "tangent-log" else "affine"
    d = stack_out.shape[-1]
    return frechet_mean(stack_out, manifold=f"spd-{d}", metric=metric)


def freeze_base(model: SPDNetModel, train_ps: np.ndarray) -> None:
    """Fix the evaluation-time base point from the full training set."""
    if model.terminal == "logeig":
        model.base = None
        return
    out, _ = stack_forward(model, train_ps)
    model.base = batch_base(model, out)


def spdnet_forward(model: SPDNetModel, ps: np.ndarray, base: np.ndarray | None = None) -> np.ndarray:
    ps = np.asarray(ps, dtype=np.float64)
    single = ps.ndim == 2
    stack_out, _ = stack_forward(model, ps[None] if single else ps)
    feats, _, _ = terminal_features(model, stack_out, base if base is not None else model.base)
    out = nn.forward(model.net, feats)
    return out[0] if single else out


def spdnet_loss_grads(
    model: SPDNetModel,
    ps: np.ndarray,
    targets: np.ndarray,
    loss: nn.LossKind,
    base: np.ndarray | None = None,
) -> tuple[float, nn.Gradients, list[np.ndarray], np.ndarray]:
    """Mean batch loss with gradients for the dense tail, every BiMap
    weight, and the input matrices (convention dL = <G, dP>_F). The base
    point of a tangent terminal is treated as constant."""
    ps = np.asarray(ps, dtype=np.float64)
    if ps.ndim == 2:
        ps = ps[None]
    stack_out, caches = stack_forward(model, ps)
    feats, term_eig, isq = terminal_features(
        model, stack_out, base if base is not None else model.base
    )
    outputs, acts = nn.forward_cached(model.net, feats)
    value, d_out = nn.loss_and_output_grad(outputs, targets, loss)
    net_grads, d_feats = nn.backprop_input(model.net, acts, d_out)
    grad = logeig_backward(term_eig, d_feats)
    if isq is not None:
        grad = isq[None] @ grad @ isq[None]
    w_grads: list[np.ndarray] = [None] * len(model.bimaps)  # type: ignore[list-item]
    for j in range(len(model.bimaps) - 1, -1, -1):
        inp, eig = caches[j]
        grad = reeig_backward(model.reeigs[j], eig, grad)
        grad, w_grads[j] = bimap_backward(model.bimaps[j], inp, grad)
    return value, net_grads, w_grads, grad


# ---------------------------------------------------------------------------
# serialization (extends the dense checkpoint with the BiMap matrices)

def save_spdnet(model: SPDNetModel, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(model.net, directory / "net.json")
    doc = {
        "format": SPDNET_FORMAT,
        "terminal": model.terminal,
        "reeig_epsilon": [r.epsilon for r in model.reeigs],
        "bimaps": [b.weight.tolist() for b in model.bimaps],
        "base": None if model.base is None else model.base.tolist(),
        "network": "net.json",
    }
    path = directory / "model.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def load_spdnet(directory: str | Path) -> SPDNetModel:
    directory = Path(directory)
    doc = json.loads((directory / "model.json").read_text(encoding="utf-8"))
    if doc.get("format") != SPDNET_FORMAT:
        raise SpecError(f"unrecognized SPD checkpoint format in {directory}")
    return SPDNetModel(
        bimaps=[BiMapLayer(np.asarray(w, dtype=np.float64)) for w in doc["bimaps"]],
        reeigs=[ReEigLayer(float(e)) for e in doc["reeig_epsilon"]],
        terminal=doc["terminal"],
        net=nn.load_checkpoint(directory / doc["network"]),
        base=None if doc["base"] is None else np.asarray(doc["base"], dtype=np.float64),
    )
