"""Unit-sphere geometry in ambient coordinates.

Points are unit vectors in R^m; tangent vectors at p are vectors orthogonal
to p. The preshape sphere reuses all of these on its R^{2k} representation,
since centering is preserved by linear combinations of centered vectors.
"""

from __future__ import annotations

import numpy as np

from ..errors import CutLocusError, GeometryError

ANTIPODAL_TOL = 1e-8
TANGENT_TOL = 1e-9


def project_to_sphere(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def project_tangent(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Remove the component of v along p."""
    return v - (v @ p)[..., None] * p if v.ndim > 1 else v - np.dot(v, p) * p


def sphere_exp(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Geodesic endpoint cos(|v|) p + sin(|v|) v / |v|, renormalized.

    Raises GeometryError if v is not tangent at p beyond tolerance.
    """
    p = np.asarray(p, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nv = float(np.linalg.norm(v))
    if abs(float(np.dot(v, p))) > TANGENT_TOL * max(1.0, nv):
        raise GeometryError("vector is not tangent at the base point")
    if nv == 0.0:
        return p.copy()
    out = np.cos(nv) * p + (np.sin(nv) / nv) * v
    return out / np.linalg.norm(out)


def sphere_log(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Inverse of the exponential map: theta * (q - <p,q> p) normalized,
    theta = arccos(<p,q>). Undefined at the antipode."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    c = float(np.dot(p, q))
    if 1.0 + c < ANTIPODAL_TOL:
        raise CutLocusError("log map undefined at the antipodal point")
    w = q - c * p
    nw = float(np.linalg.norm(w))
    if nw < 1e-14:
        return np.zeros_like(p)
    theta = float(np.arccos(np.clip(c, -1.0, 1.0)))
    return (theta / nw) * w


def sphere_log_batch(p: np.ndarray, qs: np.ndarray) -> np.ndarray:
    """Log map of a batch (n, m) of points at a common base p."""
    p = np.asarray(p, dtype=np.float64)
    qs = np.asarray(qs, dtype=np.float64)
    c = qs @ p
    bad = np.nonzero(1.0 + c < ANTIPODAL_TOL)[0]
    if bad.size:
        raise CutLocusError(
            f"log map undefined at the antipodal point (sample {bad[0]})"
        )
    w = qs - c[:, None] * p
    nw = np.linalg.norm(w, axis=1)
    theta = np.arccos(np.clip(c, -1.0, 1.0))
    scale = np.where(nw < 1e-14, 0.0, theta / np.where(nw < 1e-14, 1.0, nw))
    return scale[:, None] * w


def sphere_dist(p: np.ndarray, q: np.ndarray) -> float:
    c = float(np.dot(p, q))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def sphere_dist_matrix(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Pairwise geodesic distances between rows of xs (n, m) and ys (r, m)."""
    g = np.clip(xs @ ys.T, -1.0, 1.0)
    return np.arccos(g)


def tangent_basis(p: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at p, rows of shape (m-1, m).

    Deterministic: Gram-Schmidt over the ambient standard basis projected
    to the tangent space, kept in coordinate order.
    """
    p = np.asarray(p, dtype=np.float64)
    m = p.shape[0]
    basis: list[np.ndarray] = []
    for i in range(m):
        u = np.zeros(m)
        u[i] = 1.0
        u = u - np.dot(u, p) * p
        for b in basis:
            u = u - np.dot(u, b) * b
        norm = np.linalg.norm(u)
        if norm > 1e-8:
            basis.append(u / norm)
        if len(basis) == m - 1:
            break
    return np.array(basis)


def uniform_sphere(ambient_dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniform on the unit sphere of R^{ambient_dim}."""
    x = rng.standard_normal((n, ambient_dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_tangent(p: np.ndarray, rng: np.random.Generator, norm: float) -> np.ndarray:
    """A tangent vector at p with the requested norm."""
    v = rng.standard_normal(p.shape[0])
    v = v - np.dot(v, p) * p
    return v * (norm / np.linalg.norm(v))
