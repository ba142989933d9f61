"""Synthetic data: von Mises-Fisher sampling, the two-stage mixture
classification model on spheres, noisy landmark shapes, SPD classes built
from tangent noise, and smooth regression targets.

Every generator is a pure function of its spec and seed: the same seed
reproduces the same dataset bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GeometryError, ShapeError, SpecError
from .manifolds import (
    ManifoldPoint,
    manifold_kind,
    preshape_batch,
    uniform_sphere,
    validate_coords,
)
from .manifolds.points import ambient_shape
from .manifolds.spd import expm_batch, spd_invsqrt, spd_sqrt


@dataclass
class VMFParams:
    """Location mu (unit vector) and concentration kappa >= 0 of a von
    Mises-Fisher distribution, density proportional to exp(kappa mu^T y)."""

    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if self.mu.ndim != 1 or self.mu.shape[0] < 2:
            raise SpecError("mu must be a vector in R^m, m >= 2")
        if abs(np.linalg.norm(self.mu) - 1.0) > 1e-10:
            raise GeometryError("mu must be a unit vector")
        if self.kappa < 0:
            raise SpecError("kappa must be nonnegative")


@dataclass
class MixtureSpec:
    """Two-stage mixture on a sphere: per class, ``subcenters`` centers are
    drawn around the class location with concentration kappa1; each
    observation picks one uniformly and is drawn around it with kappa2."""

    sphere_dim: int
    n_classes: int
    n_per_class: int
    kappa1: float
    kappa2: float
    subcenters: int = 10
    centers: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.sphere_dim < 1:
            raise SpecError("sphere dimension must be >= 1")
        if self.n_classes < 2:
            raise SpecError("need at least two classes")
        if self.n_per_class < 1 or self.subcenters < 1:
            raise SpecError("counts must be positive")
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise SpecError("concentrations must be nonnegative")
        m = self.sphere_dim + 1
        if self.centers is None:
            if self.n_classes > m:
                raise SpecError(
                    "default orthogonal class centers need n_classes <= "
                    f"ambient dimension {m}; pass centers explicitly"
                )
            self.centers = np.eye(m)[: self.n_classes]
        else:
            self.centers = np.asarray(self.centers, dtype=np.float64)
            if self.centers.shape != (self.n_classes, m):
                raise ShapeError("centers must be (n_classes, sphere_dim+1)")


@dataclass
class Dataset:
    """Paired manifold inputs and targets with generator provenance.

    ``points`` stacks ambient coordinates: (n, m) for sphere/preshape and
    (n, d, d) for SPD. Classification targets are int labels; regression
    targets are floats.
    """

    manifold: str
    points: np.ndarray
    targets: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.points.shape[0] != self.targets.shape[0]:
            raise ShapeError("points and targets must have equal length")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def inputs(self) -> list[ManifoldPoint]:
        return [self.point(i) for i in range(len(self))]

    def point(self, i: int) -> ManifoldPoint:
        return ManifoldPoint(self.manifold, self.points[i])

    @property
    def is_classification(self) -> bool:
        return np.issubdtype(self.targets.dtype, np.integer)

    @property
    def n_classes(self) -> int:
        if not self.is_classification:
            raise SpecError("regression dataset has no classes")
        return int(self.targets.max()) + 1

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.manifold, self.points[rows], self.targets[rows],
                       dict(self.provenance))

    def validate_points(self) -> None:
        for i in range(len(self)):
            validate_coords(self.manifold, self.points[i])


# ---------------------------------------------------------------------------
# von Mises-Fisher sampling

def _vmf_cosines(kappa: float, m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample the marginal of w = mu^T x on the sphere of R^m,
    with density proportional to exp(kappa w)(1 - w^2)^{(m-3)/2}."""
    a = m - 1
    b = a / (np.sqrt(4.0 * kappa**2 + a**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + a * np.log(1.0 - x0**2)
    out = np.empty(n)
    filled = 0
    while filled < n:
        todo = n - filled
        z = rng.beta(a / 2.0, a / 2.0, size=todo)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=todo)
        accept = kappa * w + a * np.log1p(-x0 * w) - c >= np.log(u)
        got = int(accept.sum())
        out[filled : filled + got] = w[accept]
        filled += got
    return out


def sample_vmf(mu, kappa: float, n: int, seed_or_rng) -> np.ndarray:
    """n i.i.d. draws from vMF(mu, kappa), rows unit-norm."""
    params = VMFParams(mu=np.asarray(mu), kappa=float(kappa))
    if n < 1:
        raise SpecError("sample count must be positive")
    rng = (seed_or_rng if isinstance(seed_or_rng, np.random.Generator)
           else np.random.default_rng(seed_or_rng))
    m = params.mu.shape[0]
    w = _vmf_cosines(params.kappa, m, n, rng)
    v = rng.standard_normal((n, m))
    v -= (v @ params.mu)[:, None] * params.mu
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = w[:, None] * params.mu + np.sqrt(np.maximum(1.0 - w**2, 0.0))[:, None] * v
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def vmf_cosine_log_density(w: np.ndarray, kappa: float, sphere_dim: int) -> np.ndarray:
    """Unnormalized log density of the cosine marginal; used by the
    quadrature oracles in the test suite."""
    w = np.asarray(w, dtype=np.float64)
    exponent = (sphere_dim - 2) / 2.0
    with np.errstate(divide="ignore"):
        return kappa * w + exponent * np.log1p(-np.clip(w, -1.0, 1.0) ** 2)


def sample_mixture(spec: MixtureSpec) -> Dataset:
    """Labelled sphere samples from the two-stage mixture."""
    rng = np.random.default_rng(spec.seed)
    m = spec.sphere_dim + 1
    n_total = spec.n_classes * spec.n_per_class
    points = np.empty((n_total, m))
    labels = np.empty(n_total, dtype=np.int64)
    row = 0
    for i in range(spec.n_classes):
        subs = sample_vmf(spec.centers[i], spec.kappa1, spec.subcenters, rng)
        assign = rng.integers(0, spec.subcenters, size=spec.n_per_class)
        block = np.empty((spec.n_per_class, m))
        for j in range(spec.subcenters):
            mask = assign == j
            cnt = int(mask.sum())
            if cnt:
                block[mask] = sample_vmf(subs[j], spec.kappa2, cnt, rng)
        points[row : row + spec.n_per_class] = block
        labels[row : row + spec.n_per_class] = i
        row += spec.n_per_class
    provenance = {
        "generator": "mixture",
        "sphere_dim": spec.sphere_dim,
        "n_classes": spec.n_classes,
        "n_per_class": spec.n_per_class,
        "kappa1": spec.kappa1,
        "kappa2": spec.kappa2,
        "subcenters": spec.subcenters,
        "seed": spec.seed,
    }
    return Dataset(f"sphere-{spec.sphere_dim}", points, labels, provenance)


# ---------------------------------------------------------------------------
# planar shapes

def shape_template(name: str, k: int) -> np.ndarray:
    """Built-in (k, 2) landmark templates."""
    t = np.linspace(0.0, 2.0 * np.pi, k, endpoint=False)
    if name == "circle":
        return np.column_stack([np.cos(t), np.sin(t)])
    if name == "ellipse":
        return np.column_stack([1.6 * np.cos(t), 0.7 * np.sin(t)])
    if name == "trefoil":
        r = 1.0 + 0.35 * np.cos(3.0 * t)
        return np.column_stack([r * np.cos(t), r * np.sin(t)])
    if name == "bean":
        r = 1.0 + 0.45 * np.cos(t) + 0.18 * np.sin(2.0 * t)
        return np.column_stack([r * np.cos(t), r * np.sin(t)])
    raise SpecError(f"unknown shape template {name!r}")


def gen_planar_shapes(
    templates,
    sigma: float,
    n_per_class: int,
    seed: int,
    rotation: float | str = "full",
    scale_jitter: float = 0.3,
    translation_scale: float = 1.0,
) -> Dataset:
    """Noisy landmark shapes per template class.

    Each sample perturbs the template landmarks with i.i.d. Gaussian noise
    of standard deviation ``sigma``, applies a random similarity transform
    (rotation uniform over the full circle, or within +-``rotation``
    radians; log-scale uniform in +-``scale_jitter``; Gaussian
    translation), then preshapes. The transform is removed again by the
    preshape/embedding, which is exactly what the invariance tests rely on.
    """
    if sigma < 0:
        raise SpecError("noise sigma must be nonnegative")
    if n_per_class < 1:
        raise SpecError("n_per_class must be positive")
    rng = np.random.default_rng(seed)
    tpls = [np.asarray(t, dtype=np.float64) for t in templates]
    k = tpls[0].shape[0]
    if any(t.shape != (k, 2) for t in tpls):
        raise ShapeError("all templates must share the same (k, 2) shape")
    if k < 3:
        raise SpecError("need at least 3 landmarks")
    n_total = len(tpls) * n_per_class
    raw = np.empty((n_total, k, 2))
    labels = np.empty(n_total, dtype=np.int64)
    row = 0
    for c, tpl in enumerate(tpls):
        noisy = tpl[None] + sigma * rng.standard_normal((n_per_class, k, 2))
        if rotation == "full":
            angles = rng.uniform(0.0, 2.0 * np.pi, n_per_class)
        else:
            angles = rng.uniform(-float(rotation), float(rotation), n_per_class)
        scales = np.exp(rng.uniform(-scale_jitter, scale_jitter, n_per_class))
        shifts = translation_scale * rng.standard_normal((n_per_class, 2))
        cos, sin = np.cos(angles), np.sin(angles)
        x = noisy[..., 0] * cos[:, None] - noisy[..., 1] * sin[:, None]
        y = noisy[..., 0] * sin[:, None] + noisy[..., 1] * cos[:, None]
        raw[row : row + n_per_class, :, 0] = scales[:, None] * x + shifts[:, None, 0]
        raw[row : row + n_per_class, :, 1] = scales[:, None] * y + shifts[:, None, 1]
        labels[row : row + n_per_class] = c
        row += n_per_class
    points = preshape_batch(raw)
    provenance = {
        "generator": "planar-shapes",
        "k": k,
        "n_classes": len(tpls),
        "n_per_class": n_per_class,
        "sigma": sigma,
        "rotation": rotation,
        "seed": seed,
    }
    return Dataset(f"preshape-{k}", points, labels, provenance)


# ---------------------------------------------------------------------------
# SPD classes

def random_spd_bases(d: int, n_classes: int, separation: float, seed: int) -> np.ndarray:
    """Class base matrices expm(separation * S_i) for independent random
    symmetric S_i with unit-variance entries."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(d)
    bases = np.zeros((n_classes, d, d))
    for i in range(n_classes):
        s = np.zeros((d, d))
        vals = rng.standard_normal(iu[0].size)
        s[iu] = vals
        s[iu[1], iu[0]] = s[iu]
        bases[i] = expm_batch((separation * s)[None])[0]
    return bases


def gen_spd_dataset(
    d: int,
    bases: np.ndarray,
    spreads,
    n_per_class: int,
    seed: int,
) -> Dataset:
    """Per class: sample symmetric tangent noise S with i.i.d. N(0, spread^2)
    entries and emit Exp_base(S); every output is SPD by construction."""
    bases = np.asarray(bases, dtype=np.float64)
    if bases.ndim != 3 or bases.shape[1:] != (d, d):
        raise ShapeError(f"bases must be (n_classes, {d}, {d})")
    n_classes = bases.shape[0]
    spreads = np.broadcast_to(np.asarray(spreads, dtype=np.float64), (n_classes,))
    if np.any(spreads < 0):
        raise SpecError("spreads must be nonnegative")
    if n_per_class < 1:
        raise SpecError("n_per_class must be positive")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(d)
    n_total = n_classes * n_per_class
    points = np.empty((n_total, d, d))
    labels = np.empty(n_total, dtype=np.int64)
    row = 0
    for c in range(n_classes):
        s = np.zeros((n_per_class, d, d))
        vals = spreads[c] * rng.standard_normal((n_per_class, iu[0].size))
        s[:, iu[0], iu[1]] = vals
        s[:, iu[1], iu[0]] = s[:, iu[0], iu[1]]
        sq = spd_sqrt(bases[c])
        isq = spd_invsqrt(bases[c])
        block = sq[None] @ expm_batch(isq[None] @ s @ isq[None]) @ sq[None]
        points[row : row + n_per_class] = 0.5 * (block + block.transpose(0, 2, 1))
        labels[row : row + n_per_class] = c
        row += n_per_class
    provenance = {
        "generator": "spd-classes",
        "d": d,
        "n_classes": n_classes,
        "n_per_class": n_per_class,
        "spreads": spreads.tolist(),
        "seed": seed,
    }
    return Dataset(f"spd-{d}", points, labels, provenance)


# ---------------------------------------------------------------------------
# regression on the sphere

def regression_target(name: str):
    """Smooth closed-form targets on the sphere (first three ambient
    coordinates)."""
    if name == "smooth":
        return lambda x: np.sin(3.0 * x[:, 0]) * x[:, 1] + x[:, 2] ** 2
    if name == "constant":
        return lambda x: np.full(x.shape[0], 0.7)
    if name == "zero":
        return lambda x: np.zeros(x.shape[0])
    raise SpecError(f"unknown regression target {name!r}")


def gen_regression_sphere(
    f0: str,
    sigma: float,
    n: int,
    seed: int,
    sphere_dim: int = 2,
) -> Dataset:
    """Uniform sphere inputs with targets f0(x) + N(0, sigma^2)."""
    if sigma < 0:
        raise SpecError("noise sigma must be nonnegative")
    if n < 1:
        raise SpecError("sample count must be positive")
    if sphere_dim < 2:
        raise SpecError("regression targets need sphere dimension >= 2")
    rng = np.random.default_rng(seed)
    x = uniform_sphere(sphere_dim + 1, n, rng)
    y = regression_target(f0)(x)
    if sigma > 0:
        y = y + sigma * rng.standard_normal(n)
    provenance = {
        "generator": "sphere-regression",
        "f0": f0,
        "sigma": sigma,
        "n": n,
        "sphere_dim": sphere_dim,
        "seed": seed,
    }
    return Dataset(f"sphere-{sphere_dim}", x, np.asarray(y, dtype=np.float64),
                   provenance)


# ---------------------------------------------------------------------------
# serialization

def save_dataset(dataset: Dataset, basepath: str | Path) -> tuple[Path, Path]:
    """Write ``<base>.csv`` (header names the manifold tag and shape) and a
    ``<base>.provenance.json`` sidecar."""
    basepath = Path(basepath)
    csv_path = basepath.with_suffix(".csv")
    flat = dataset.points.reshape(len(dataset), -1)
    target_kind = "class" if dataset.is_classification else "value"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [f"# manifold={dataset.manifold}", f"shape={dataset.points.shape}",
             f"target={target_kind}"]
        )
        writer.writerow([f"c{i}" for i in range(flat.shape[1])] + ["target"])
        for row, tgt in zip(flat, dataset.targets):
            cells = [format(v, ".17g") for v in row]
            cells.append(str(int(tgt)) if target_kind == "class" else format(tgt, ".17g"))
            writer.writerow(cells)
    prov_path = basepath.parent / (basepath.name + ".provenance.json")
    prov_path.write_text(json.dumps(dataset.provenance, indent=1, sort_keys=True),
                         encoding="utf-8")
    return csv_path, prov_path


def load_dataset(basepath: str | Path) -> Dataset:
    basepath = Path(basepath)
    csv_path = basepath.with_suffix(".csv")
    with csv_path.open("r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        meta = next(reader)
        next(reader)  # column header
        rows = [row for row in reader]
    tag = meta[0].split("=", 1)[1].strip()
    target_kind = meta[2].split("=", 1)[1].strip()
    flat = np.array([[float(v) for v in row[:-1]] for row in rows])
    if target_kind == "class":
        targets = np.array([int(row[-1]) for row in rows], dtype=np.int64)
    else:
        targets = np.array([float(row[-1]) for row in rows])
    kind, size = manifold_kind(tag)
    shape = (len(rows),) + ambient_shape(tag)
    points = flat.reshape(shape)
    prov_path = basepath.parent / (basepath.name + ".provenance.json")
    provenance = {}
    if prov_path.exists():
        provenance = json.loads(prov_path.read_text(encoding="utf-8"))
    return Dataset(tag, points, targets, provenance)
