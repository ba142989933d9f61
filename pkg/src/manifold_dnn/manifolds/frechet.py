"""Fréchet (Karcher) means by fixed-point iteration on exp/log."""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceError, SpecError
from .points import ManifoldPoint, manifold_kind
from .spd import (
    check_spd,
    expm_batch,
    logm_batch,
    spd_expm,
    spd_invsqrt,
    spd_sqrt,
)
from .sphere import sphere_exp, sphere_log_batch

MAX_ITER = 200
STEP_TOL = 1e-10


def _stack(points, manifold: str | None):
    if isinstance(points, np.ndarray):
        if manifold is None:
            raise SpecError("manifold tag required with raw point arrays")
        return np.asarray(points, dtype=np.float64), manifold
    pts = list(points)
    if not pts:
        raise SpecError("cannot average an empty set of points")
    if isinstance(pts[0], ManifoldPoint):
        tag = pts[0].manifold
        if any(p.manifold != tag for p in pts):
            raise SpecError("points lie on different manifolds")
        return np.stack([p.coords for p in pts]), tag
    if manifold is None:
        raise SpecError("manifold tag required with raw point arrays")
    return np.stack([np.asarray(p, dtype=np.float64) for p in pts]), manifold


def frechet_mean(
    points,
    manifold: str | None = None,
    metric: str = "affine",
    max_iter: int = MAX_ITER,
    tol: float = STEP_TOL,
) -> np.ndarray:
    """Minimizer of the mean squared geodesic distance to the points.

    Fixed point of x <- exp_x(mean_i log_x(p_i)), iterated until the step
    norm drops below ``tol``. Sphere and preshape start from the normalized
    Euclidean mean; SPD under the affine metric starts from the clipped
    arithmetic mean; SPD under the log-Euclidean metric has the closed form
    expm(mean logm).
    """
    xs, tag = _stack(points, manifold)
    kind, _ = manifold_kind(tag)
    if xs.shape[0] == 0:
        raise SpecError("cannot average an empty set of points")
    if xs.shape[0] == 1:
        return xs[0].copy()
    if kind in ("sphere", "preshape"):
        return _sphere_mean(xs, max_iter, tol)
    if metric == "log-euclidean":
        return expm_batch(logm_batch(xs)[None].mean(axis=1))[0]
    return _spd_affine_mean(xs, max_iter, tol)


def _sphere_mean(xs: np.ndarray, max_iter: int, tol: float) -> np.ndarray:
    x = xs.mean(axis=0)
    norm = np.linalg.norm(x)
    if norm < 1e-12:
        # antipodally balanced start; fall back to the first point
        x = xs[0].copy()
    else:
        x = x / norm
    for _ in range(max_iter):
        v = sphere_log_batch(x, xs).mean(axis=0)
        step = float(np.linalg.norm(v))
        if step < tol:
            return x
        x = sphere_exp(x, v)
    raise ConvergenceError(
        f"Fréchet mean did not converge in {max_iter} iterations",
        last_iterate=x,
    )


def _spd_affine_mean(xs: np.ndarray, max_iter: int, tol: float) -> np.ndarray:
    x = xs.mean(axis=0)
    # clip eigenvalues so the starting point is safely positive definite
    s, u = np.linalg.eigh(0.5 * (x + x.T))
    floor = 1e-12 * max(float(np.linalg.norm(x)), 1e-300)
    x = (u * np.maximum(s, floor)) @ u.T
    for _ in range(max_iter):
        isq = spd_invsqrt(x)
        sq = spd_sqrt(x)
        w = logm_batch(isq[None] @ xs @ isq[None]).mean(axis=0)
        step = float(np.linalg.norm(sq @ w @ sq))
        if step < tol:
            return check_spd(x)
        x = sq @ spd_expm(w) @ sq
        x = 0.5 * (x + x.T)
    raise ConvergenceError(
        f"Fréchet mean did not converge in {max_iter} iterations",
        last_iterate=x,
    )
