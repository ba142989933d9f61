"""The three manifold network architectures.

Each composes a fixed geometric feature map with a dense ReLU network:

* eDNN: an embedding of the manifold into Euclidean space (sphere
  inclusion, the rank-one Hermitian shape embedding, or the SPD matrix
  log), then one network on the image.
* tDNN: normal coordinates at a single base point (typically the Fréchet
  mean of the training set), then one network on the tangent space.
* iDNN: per-chart normal coordinates blended by the atlas partition of
  unity; one independent network per chart.

Geometry maps carry no trainable parameters, so training gradients flow
only into the networks. For the iDNN, the output-gradient of chart k is
scaled by its partition weight, and charts whose weight falls below
``TAU_SKIP`` are skipped entirely (their log maps may be undefined near
the cut locus; the bump's compact support makes this exact, not an
approximation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import ShapeError, SpecError
from .manifolds import (
    Atlas,
    Chart,
    ManifoldPoint,
    coords_of,
    frechet_mean,
    intrinsic_dim,
    manifold_kind,
    normal_coords_batch,
    partition_weights_batch,
    preshape_tangent_basis,
    spd_embed_batch,
    spd_invsqrt,
    spd_logm,
    sym_dim,
    sym_vec,
    tangent_basis,
    vw_embed_batch,
)
from .manifolds.points import ambient_shape

TAU_SKIP = 1e-12

MODEL_FORMAT = "manifold-model-v1"


# ---------------------------------------------------------------------------
# embeddings (eDNN feature maps)

def default_embedding(manifold: str) -> str:
    kind, _ = manifold_kind(manifold)
    return {"sphere": "inclusion", "preshape": "veronese-whitney",
            "spd": "matrix-log"}[kind]


def embedding_dim(manifold: str, embedding: str) -> int:
    kind, size = manifold_kind(manifold)
    if embedding == "ambient":
        if kind == "spd":
            return sym_dim(size)
        return ambient_shape(manifold)[0]
    if embedding == "inclusion":
        if kind == "spd":
            raise SpecError("inclusion embedding is not defined on spd")
        return ambient_shape(manifold)[0]
    if embedding == "veronese-whitney":
        if kind != "preshape":
            raise SpecError("veronese-whitney embedding requires preshape data")
        return size * size
    if embedding == "matrix-log":
        if kind != "spd":
            raise SpecError("matrix-log embedding requires spd data")
        return sym_dim(size)
    raise SpecError(f"unknown embedding {embedding!r}")


def embed_batch(manifold: str, embedding: str, xs: np.ndarray) -> np.ndarray:
    kind, _ = manifold_kind(manifold)
    xs = np.asarray(xs, dtype=np.float64)
    if embedding in ("inclusion", "ambient"):
        if kind == "spd":
            return sym_vec(xs)
        return xs
    if embedding == "veronese-whitney":
        return vw_embed_batch(xs)
    if embedding == "matrix-log":
        return spd_embed_batch(xs)
    raise SpecError(f"unknown embedding {embedding!r}")


# ---------------------------------------------------------------------------
# tangent frames (tDNN feature maps)

@dataclass
class ChartFrame:
    """Tangent coordinates through a sphere/preshape chart."""

    chart: Chart

    @property
    def dim(self) -> int:
        return self.chart.dim

    def coords_batch(self, xs: np.ndarray) -> np.ndarray:
        return normal_coords_batch(self.chart, xs)


@dataclass
class SPDFrame:
    """Tangent coordinates on SPD(d) at a base point.

    affine metric:        sym_vec(logm(B^{-1/2} P B^{-1/2}))
    log-euclidean metric: sym_vec(logm P - logm B)
    """

    base: np.ndarray
    metric: str = "affine"

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.float64)
        if self.metric not in ("affine", "log-euclidean"):
            raise SpecError(f"unknown spd metric {self.metric!r}")
        self._isq = spd_invsqrt(self.base)
        self._logbase = spd_logm(self.base)

    @property
    def dim(self) -> int:
        return sym_dim(self.base.shape[0])

    def coords_batch(self, xs: np.ndarray) -> np.ndarray:
        if self.metric == "affine":
            whitened = self._isq[None] @ xs @ self._isq[None]
            return spd_embed_batch(whitened)
        return spd_embed_batch(xs) - sym_vec(self._logbase)[None, :]


def frame_at(manifold: str, base: np.ndarray, metric: str = "affine"):
    kind, _ = manifold_kind(manifold)
    base = np.asarray(base, dtype=np.float64)
    if kind == "spd":
        return SPDFrame(base=base, metric=metric)
    basis = preshape_tangent_basis(base) if kind == "preshape" else tangent_basis(base)
    return ChartFrame(Chart(index=0, base=base, basis=basis, radius=2.0))


# ---------------------------------------------------------------------------
# models

@dataclass
class EDNNModel:
    manifold: str
    embedding: str
    net: nn.NetworkParams

    def copy(self):
        return EDNNModel(self.manifold, self.embedding, self.net.copy())


@dataclass
class TDNNModel:
    manifold: str
    frame: object
    net: nn.NetworkParams

    def copy(self):
        return TDNNModel(self.manifold, self.frame, self.net.copy())


@dataclass
class IDNNModel:
    manifold: str
    atlas: Atlas
    nets: list[nn.NetworkParams]

    def __post_init__(self):
        if len(self.nets) != self.atlas.n_charts:
            raise SpecError("one network per chart is required")
        widths = {net.output_dim for net in self.nets}
        if len(widths) != 1:
            raise SpecError("all chart networks must share the output width")

    def copy(self):
        return IDNNModel(self.manifold, self.atlas, [n.copy() for n in self.nets])


def build_ednn(manifold: str, hidden, out_width: int, seed: int,
               embedding: str | None = None) -> EDNNModel:
    embedding = embedding or default_embedding(manifold)
    p0 = embedding_dim(manifold, embedding)
    net = nn.init_network((p0, *hidden, out_width), seed)
    return EDNNModel(manifold=manifold, embedding=embedding, net=net)


def build_tdnn(manifold: str, base: np.ndarray, hidden, out_width: int,
               seed: int, metric: str = "affine") -> TDNNModel:
    frame = frame_at(manifold, base, metric=metric)
    net = nn.init_network((frame.dim, *hidden, out_width), seed)
    return TDNNModel(manifold=manifold, frame=frame, net=net)


def build_tdnn_at_mean(manifold: str, train_points: np.ndarray, hidden,
                       out_width: int, seed: int, metric: str = "affine") -> TDNNModel:
    base = frechet_mean(train_points, manifold=manifold, metric=metric)
    return build_tdnn(manifold, base, hidden, out_width, seed, metric=metric)


def build_idnn(manifold: str, atlas: Atlas, hidden, out_width: int,
               seed: int) -> IDNNModel:
    nets = [
        nn.init_network((atlas.dim, *hidden, out_width), seed + k)
        for k in range(atlas.n_charts)
    ]
    return IDNNModel(manifold=manifold, atlas=atlas, nets=nets)


# ---------------------------------------------------------------------------
# forward passes

def _batch_coords(model, x) -> tuple[np.ndarray, bool]:
    coords = coords_of(x, model.manifold)
    single = coords.shape == ambient_shape(model.manifold)
    return (coords[None] if single else coords), single


def ednn_forward(model: EDNNModel, x) -> np.ndarray:
    xs, single = _batch_coords(model, x)
    out = nn.forward(model.net, embed_batch(model.manifold, model.embedding, xs))
    return out[0] if single else out


def tdnn_forward(model: TDNNModel, x) -> np.ndarray:
    xs, single = _batch_coords(model, x)
    out = nn.forward(model.net, model.frame.coords_batch(xs))
    return out[0] if single else out


def idnn_forward(model: IDNNModel, x) -> np.ndarray:
    xs, single = _batch_coords(model, x)
    tau = partition_weights_batch(model.atlas, xs)
    out = np.zeros((xs.shape[0], model.nets[0].output_dim))
    for k, (chart, net) in enumerate(zip(model.atlas.charts, model.nets)):
        active = tau[:, k] > TAU_SKIP
        if not np.any(active):
            continue
        coords = normal_coords_batch(chart, xs[active])
        out[active] += tau[active, k][:, None] * nn.forward(net, coords)
    return out[0] if single else out


def model_forward(model, x) -> np.ndarray:
    if isinstance(model, EDNNModel):
        return ednn_forward(model, x)
    if isinstance(model, TDNNModel):
        return tdnn_forward(model, x)
    if isinstance(model, IDNNModel):
        return idnn_forward(model, x)
    raise SpecError(f"unknown model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# precomputed features for training (the geometry is constant in the
# parameters, so it is evaluated once per dataset)

@dataclass
class DenseFeatures:
    """Feature matrix for an eDNN/tDNN: plain network training."""

    features: np.ndarray


@dataclass
class ChartFeatures:
    """Per-chart features for an iDNN: partition weights (n, K), and for
    each chart the active row indices with their normal coordinates."""

    tau: np.ndarray
    active: list[np.ndarray]
    coords: list[np.ndarray]
    n: int


def prepare_features(model, xs: np.ndarray):
    xs = np.asarray(xs, dtype=np.float64)
    if isinstance(model, EDNNModel):
        return DenseFeatures(embed_batch(model.manifold, model.embedding, xs))
    if isinstance(model, TDNNModel):
        return DenseFeatures(model.frame.coords_batch(xs))
    if isinstance(model, IDNNModel):
        tau = partition_weights_batch(model.atlas, xs)
        active, coords = [], []
        for k, chart in enumerate(model.atlas.charts):
            idx = np.nonzero(tau[:, k] > TAU_SKIP)[0]
            active.append(idx)
            coords.append(normal_coords_batch(chart, xs[idx]))
        return ChartFeatures(tau=tau, active=active, coords=coords, n=xs.shape[0])
    raise SpecError(f"unknown model type {type(model).__name__}")


def _subset_chart_features(feats: ChartFeatures, rows: np.ndarray) -> ChartFeatures:
    pos = -np.ones(feats.n, dtype=np.int64)
    pos[rows] = np.arange(rows.size)
    active, coords = [], []
    for idx, c in zip(feats.active, feats.coords):
        keep = pos[idx] >= 0
        active.append(pos[idx][keep])
        coords.append(c[keep])
    return ChartFeatures(tau=feats.tau[rows], active=active, coords=coords,
                         n=rows.size)


def subset_features(feats, rows: np.ndarray):
    if isinstance(feats, DenseFeatures):
        return DenseFeatures(feats.features[rows])
    return _subset_chart_features(feats, rows)


def forward_from_features(model, feats) -> np.ndarray:
    if isinstance(feats, DenseFeatures):
        net = model.net
        return nn.forward(net, feats.features)
    out = np.zeros((feats.n, model.nets[0].output_dim))
    for k, net in enumerate(model.nets):
        idx = feats.active[k]
        if idx.size == 0:
            continue
        out[idx] += feats.tau[idx, k][:, None] * nn.forward(net, feats.coords[k])
    return out


def gradients_from_features(model, feats, targets, loss) -> tuple[float, list[nn.Gradients]]:
    """Exact mean-batch loss gradients, one record per network."""
    if isinstance(feats, DenseFeatures):
        grads, value = nn.backward(model.net, feats.features, targets, loss)
        return value, [grads]
    if feats.n == 0:
        raise ShapeError("empty batch")
    outputs = np.zeros((feats.n, model.nets[0].output_dim))
    caches = []
    for k, net in enumerate(model.nets):
        idx = feats.active[k]
        if idx.size == 0:
            caches.append(None)
            continue
        out_k, acts = nn.forward_cached(net, feats.coords[k])
        caches.append(acts)
        outputs[idx] += feats.tau[idx, k][:, None] * out_k
    value, d_out = nn.loss_and_output_grad(outputs, targets, loss)
    grads = []
    for k, net in enumerate(model.nets):
        idx = feats.active[k]
        if idx.size == 0:
            grads.append(nn.Gradients.zeros_like(net))
            continue
        upstream = d_out[idx] * feats.tau[idx, k][:, None]
        grads.append(nn.backprop(net, caches[k], upstream))
    return value, grads


def model_gradients(model, xs, targets, loss) -> tuple[float, list[nn.Gradients]]:
    """Loss and per-network gradients for a batch of manifold points."""
    xs = coords_of(xs) if not isinstance(xs, np.ndarray) else xs
    feats = prepare_features(model, np.asarray(xs, dtype=np.float64))
    return gradients_from_features(model, feats, targets, loss)


def model_networks(model) -> list[nn.NetworkParams]:
    if isinstance(model, IDNNModel):
        return model.nets
    return [model.net]


def set_model_networks(model, nets: list[nn.NetworkParams]) -> None:
    if isinstance(model, IDNNModel):
        model.nets = nets
    else:
        model.net = nets[0]


# ---------------------------------------------------------------------------
# serialization

def _chart_doc(chart: Chart) -> dict:
    return {
        "index": chart.index,
        "base": chart.base.tolist(),
        "basis": chart.basis.tolist(),
        "radius": chart.radius,
        "sharpness": chart.sharpness,
    }


def _chart_from_doc(doc: dict) -> Chart:
    return Chart(
        index=int(doc["index"]),
        base=np.asarray(doc["base"], dtype=np.float64),
        basis=np.asarray(doc["basis"], dtype=np.float64),
        radius=float(doc["radius"]),
        sharpness=float(doc["sharpness"]),
    )


def save_model(model, directory: str | Path) -> Path:
    """Write ``model.json`` plus one checkpoint file per network."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nets = model_networks(model)
    refs = []
    for k, net in enumerate(nets):
        ref = f"net_{k}.json"
        nn.save_checkpoint(net, directory / ref)
        refs.append(ref)
    doc: dict = {"format": MODEL_FORMAT, "manifold": model.manifold,
                 "networks": refs}
    if isinstance(model, EDNNModel):
        doc["kind"] = "ednn"
        doc["embedding"] = model.embedding
    elif isinstance(model, TDNNModel):
        doc["kind"] = "tdnn"
        if isinstance(model.frame, SPDFrame):
            doc["frame"] = {"type": "spd", "base": model.frame.base.tolist(),
                            "metric": model.frame.metric}
        else:
            doc["frame"] = {"type": "chart", "chart": _chart_doc(model.frame.chart)}
    elif isinstance(model, IDNNModel):
        doc["kind"] = "idnn"
        doc["atlas"] = {
            "covering_tol": model.atlas.covering_tol,
            "charts": [_chart_doc(c) for c in model.atlas.charts],
        }
    else:
        raise SpecError(f"unknown model type {type(model).__name__}")
    path = directory / "model.json"
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return path


def load_model(directory: str | Path):
    directory = Path(directory)
    doc = json.loads((directory / "model.json").read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise SpecError(f"unrecognized model format in {directory}")
    nets = [nn.load_checkpoint(directory / ref) for ref in doc["networks"]]
    kind = doc["kind"]
    if kind == "ednn":
        return EDNNModel(doc["manifold"], doc["embedding"], nets[0])
    if kind == "tdnn":
        frame_doc = doc["frame"]
        if frame_doc["type"] == "spd":
            frame = SPDFrame(np.asarray(frame_doc["base"]), frame_doc["metric"])
        else:
            frame = ChartFrame(_chart_from_doc(frame_doc["chart"]))
        return TDNNModel(doc["manifold"], frame, nets[0])
    if kind == "idnn":
        atlas = Atlas(
            charts=[_chart_from_doc(c) for c in doc["atlas"]["charts"]],
            covering_tol=float(doc["atlas"]["covering_tol"]),
        )
        return IDNNModel(doc["manifold"], atlas, nets)
    raise SpecError(f"unknown model kind {kind!r}")
