"""Chart atlases with a bump-function partition of unity.

A chart is a base point with an orthonormal tangent basis and a compactly
supported bump. The bump at chord distance c from the base is

    exp(-s / (1 - (c/r)^2))   for c < r,   0 otherwise,

with support radius r measured in ambient chord distance and sharpness s.
Normalizing the bumps over an atlas yields nonnegative weights that sum to
one wherever at least one bump is positive.

The default two-pole atlas needs r > sqrt(2) to cover the sphere (every
point has chord distance <= sqrt(2) to the nearer pole); r = 1.9 leaves a
wide overlap band while keeping both poles outside each other's chart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CoverageGapError, GeometryError, SpecError
from .points import manifold_kind
from .shapes import preshape, preshape_tangent_basis
from .sphere import sphere_log, sphere_log_batch, tangent_basis

BASIS_TOL = 1e-9


@dataclass
class Chart:
    """Base point, orthonormal tangent basis (rows), and bump parameters."""

    index: int
    base: np.ndarray
    basis: np.ndarray
    radius: float
    sharpness: float = 1.0

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.float64)
        self.basis = np.asarray(self.basis, dtype=np.float64)
        if self.radius <= 0:
            raise SpecError("chart radius must be positive")
        if self.sharpness <= 0:
            raise SpecError("chart sharpness must be positive")
        gram = self.basis @ self.basis.T
        if np.max(np.abs(gram - np.eye(self.basis.shape[0]))) > BASIS_TOL:
            raise GeometryError("chart basis is not orthonormal")
        if np.max(np.abs(self.basis @ self.base)) > BASIS_TOL:
            raise GeometryError("chart basis is not tangent to the base point")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


@dataclass
class Atlas:
    charts: list[Chart]
    covering_tol: float = 1e-12

    def __post_init__(self):
        if not self.charts:
            raise SpecError("atlas needs at least one chart")

    @property
    def n_charts(self) -> int:
        return len(self.charts)

    @property
    def dim(self) -> int:
        return self.charts[0].dim


def bump_value(chord, radius: float, sharpness: float = 1.0) -> np.ndarray:
    """Compactly supported bump of the chord distance; exactly zero at and
    beyond the support radius."""
    t2 = (np.asarray(chord, dtype=np.float64) / radius) ** 2
    inside = t2 < 1.0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        vals = np.where(inside, np.exp(-sharpness / np.where(inside, 1.0 - t2, 1.0)), 0.0)
    return vals


def normal_coords(chart: Chart, x: np.ndarray) -> np.ndarray:
    """Coordinates of log_{base}(x) in the chart basis; the norm equals the
    geodesic distance to the base."""
    return chart.basis @ sphere_log(chart.base, np.asarray(x, dtype=np.float64))


def normal_coords_batch(chart: Chart, xs: np.ndarray) -> np.ndarray:
    return sphere_log_batch(chart.base, xs) @ chart.basis.T


def partition_weights(atlas: Atlas, x: np.ndarray) -> np.ndarray:
    """Normalized bump weights at x: nonnegative, summing to one. Raises
    CoverageGapError when every bump vanishes."""
    return partition_weights_batch(atlas, np.asarray(x, dtype=np.float64)[None, :])[0]


def partition_weights_batch(atlas: Atlas, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    raw = np.empty((xs.shape[0], atlas.n_charts))
    for k, chart in enumerate(atlas.charts):
        chord = np.linalg.norm(xs - chart.base, axis=1)
        raw[:, k] = bump_value(chord, chart.radius, chart.sharpness)
    total = raw.sum(axis=1)
    gaps = np.nonzero(total <= 0.0)[0]
    if gaps.size:
        i = int(gaps[0])
        raise CoverageGapError(
            f"no chart covers sample {i} at {np.array2string(xs[i], precision=4)}"
        )
    return raw / total[:, None]


def chart_at(base: np.ndarray, index: int = 0, radius: float = 2.0,
             sharpness: float = 1.0, manifold_kind_name: str = "sphere") -> Chart:
    """Chart centered at a point with the deterministic tangent basis for
    its manifold kind."""
    base = np.asarray(base, dtype=np.float64)
    if manifold_kind_name == "preshape":
        basis = preshape_tangent_basis(base)
    else:
        basis = tangent_basis(base)
    return Chart(index=index, base=base, basis=basis, radius=radius,
                 sharpness=sharpness)


def two_pole_atlas(manifold: str, radius: float = 1.9, sharpness: float = 1.0) -> Atlas:
    """Charts at two antipodal base points.

    Sphere: the poles (+-1, 0, ..., 0). Preshape: the poles must themselves
    be centered configurations, so the centered/normalized version of
    (1, 0, ..., 0) and its antipode are used.
    """
    kind, size = manifold_kind(manifold)
    if kind == "sphere":
        pole = np.zeros(size + 1)
        pole[0] = 1.0
    elif kind == "preshape":
        pattern = np.zeros((size, 2))
        pattern[0, 0] = 1.0
        pole = preshape(pattern)
    else:
        raise SpecError(f"no chart atlas is defined on {manifold}")
    charts = [
        chart_at(pole, index=0, radius=radius, sharpness=sharpness,
                 manifold_kind_name=kind),
        chart_at(-pole, index=1, radius=radius, sharpness=sharpness,
                 manifold_kind_name=kind),
    ]
    return Atlas(charts=charts)


def single_chart_atlas(base: np.ndarray, manifold: str, radius: float = 2.0,
                       sharpness: float = 1.0) -> Atlas:
    kind, _ = manifold_kind(manifold)
    if kind == "spd":
        raise SpecError(f"no chart atlas is defined on {manifold}")
    return Atlas(charts=[chart_at(base, index=0, radius=radius,
                                  sharpness=sharpness, manifold_kind_name=kind)])
