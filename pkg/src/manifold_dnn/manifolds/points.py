"""Typed points and tangent vectors with manifold-tag dispatch.

Manifold tags are strings: ``sphere-d`` (unit sphere S^d in R^{d+1}),
``preshape-k`` (centered unit landmark vectors in R^{2k}), ``spd-d``
(symmetric positive definite d x d matrices).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GeometryError, NotPositiveDefiniteError, SpecError

UNIT_TOL = 1e-10
CENTROID_TOL = 1e-10
SYM_TOL = 1e-10
TANGENT_TOL = 1e-9

_KINDS = ("sphere", "preshape", "spd")


def manifold_kind(tag: str) -> tuple[str, int]:
    """Split a tag like ``sphere-2`` into (kind, size)."""
    kind, sep, num = tag.partition("-")
    if kind not in _KINDS or not sep or not num.isdigit():
        raise SpecError(f"unrecognized manifold tag {tag!r}")
    size = int(num)
    if size < 1 or (kind == "preshape" and size < 3):
        raise SpecError(f"manifold tag {tag!r} has an invalid size")
    return kind, size


def ambient_shape(tag: str) -> tuple[int, ...]:
    kind, size = manifold_kind(tag)
    if kind == "sphere":
        return (size + 1,)
    if kind == "preshape":
        return (2 * size,)
    return (size, size)


def intrinsic_dim(tag: str) -> int:
    """Dimension of the manifold: d for S^d, 2k-3 for the preshape sphere,
    d(d+1)/2 for SPD(d)."""
    kind, size = manifold_kind(tag)
    if kind == "sphere":
        return size
    if kind == "preshape":
        return 2 * size - 3
    return size * (size + 1) // 2


@dataclass(frozen=True)
class ManifoldPoint:
    """A point in ambient coordinates together with its manifold tag."""

    manifold: str
    coords: np.ndarray


@dataclass(frozen=True)
class TangentVector:
    """An ambient-coordinate tangent vector at a base point."""

    base: ManifoldPoint
    coords: np.ndarray


def _centroid(z: np.ndarray) -> np.ndarray:
    # interleaved (x1, y1, ..., xk, yk) layout
    return np.array([z[0::2].mean(), z[1::2].mean()])


def validate_coords(tag: str, coords: np.ndarray) -> np.ndarray:
    """Check ambient coordinates against the manifold's invariants."""
    kind, size = manifold_kind(tag)
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape != ambient_shape(tag):
        raise GeometryError(
            f"coordinates of shape {coords.shape} do not match manifold {tag}"
        )
    if kind in ("sphere", "preshape"):
        norm = np.linalg.norm(coords)
        if abs(norm - 1.0) > UNIT_TOL:
            raise GeometryError(f"{tag} point has norm {norm:.3e}, expected 1")
        if kind == "preshape":
            c = _centroid(coords)
            if np.abs(c).max() > CENTROID_TOL:
                raise GeometryError(
                    f"preshape point has nonzero centroid {c}"
                )
    else:
        asym = np.max(np.abs(coords - coords.T))
        if asym > SYM_TOL:
            raise GeometryError(f"spd point asymmetric by {asym:.3e}")
        smallest = float(np.linalg.eigvalsh(coords)[0])
        if smallest <= 0.0:
            raise NotPositiveDefiniteError(
                f"spd point has smallest eigenvalue {smallest:.3e}"
            )
    return coords


def make_point(tag: str, coords: np.ndarray) -> ManifoldPoint:
    return ManifoldPoint(tag, validate_coords(tag, coords))


def validate_tangent(tv: TangentVector) -> None:
    kind, _ = manifold_kind(tv.base.manifold)
    v = np.asarray(tv.coords, dtype=np.float64)
    if v.shape != tv.base.coords.shape:
        raise GeometryError("tangent vector shape does not match base point")
    if kind in ("sphere", "preshape"):
        inner = float(np.dot(v.ravel(), tv.base.coords.ravel()))
        if abs(inner) > TANGENT_TOL * max(1.0, float(np.linalg.norm(v))):
            raise GeometryError(
                f"tangent vector not orthogonal to base (inner {inner:.3e})"
            )
    else:
        asym = np.max(np.abs(v - v.T))
        if asym > SYM_TOL:
            raise GeometryError(f"spd tangent asymmetric by {asym:.3e}")


def coords_of(x, tag: str | None = None) -> np.ndarray:
    """Unwrap a ManifoldPoint (checking its tag when one is expected) or
    pass a raw ndarray through."""
    if isinstance(x, ManifoldPoint):
        if tag is not None and x.manifold != tag:
            raise SpecError(
                f"point on {x.manifold} passed where {tag} was expected"
            )
        return x.coords
    return np.asarray(x, dtype=np.float64)
