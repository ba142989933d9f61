"""Symmetric positive definite matrix geometry.

Exp/log maps and distances under the affine-invariant metric, the
log-Euclidean distance, and the matrix-log embedding into vectorized
symmetric matrices. All matrix functions go through the symmetric
eigendecomposition.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import GeometryError, NotPositiveDefiniteError, ShapeError

SYM_TOL = 1e-10
# relative eigenvalue floor: below this a matrix is rejected as non-SPD;
# the same floor clamps eigenvalues before logs to guard semi-definite
# inputs that squeak past validation.
EIG_FLOOR = 1e-12


def check_symmetric(p: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {p.shape}")
    asym = float(np.max(np.abs(p - p.T)))
    if asym > tol * max(1.0, float(np.max(np.abs(p)))):
        raise GeometryError(f"matrix asymmetric by {asym:.3e}")
    return 0.5 * (p + p.T)


def check_spd(p: np.ndarray) -> np.ndarray:
    """Validate symmetry and positive definiteness (relative floor)."""
    p = check_symmetric(p)
    scale = float(np.linalg.norm(p))
    smallest = float(np.linalg.eigvalsh(p)[0])
    if scale == 0.0 or smallest <= EIG_FLOOR * scale:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (min eigenvalue {smallest:.3e})"
        )
    return p


def _eig_apply(p: np.ndarray, fn) -> np.ndarray:
    s, u = np.linalg.eigh(0.5 * (p + p.T))
    return (u * fn(s)) @ u.T


def _clamped(s: np.ndarray, scale: float) -> np.ndarray:
    return np.maximum(s, EIG_FLOOR * max(scale, 1e-300))


def spd_logm(p: np.ndarray) -> np.ndarray:
    """Matrix logarithm of an SPD matrix; eigenvalues are clamped at the
    relative floor before the log."""
    p = 0.5 * (np.asarray(p, dtype=np.float64) + np.asarray(p, dtype=np.float64).T)
    s, u = np.linalg.eigh(p)
    s = _clamped(s, float(np.linalg.norm(p)))
    return (u * np.log(s)) @ u.T


def spd_expm(s_mat: np.ndarray) -> np.ndarray:
    return _eig_apply(s_mat, np.exp)


def spd_sqrt(p: np.ndarray) -> np.ndarray:
    return _eig_apply(p, lambda s: np.sqrt(np.maximum(s, 0.0)))


def spd_invsqrt(p: np.ndarray) -> np.ndarray:
    scale = float(np.linalg.norm(p))
    return _eig_apply(p, lambda s: 1.0 / np.sqrt(_clamped(s, scale)))


def logm_batch(ps: np.ndarray) -> np.ndarray:
    """Matrix log of a stack (n, d, d) of SPD matrices."""
    ps = np.asarray(ps, dtype=np.float64)
    ps = 0.5 * (ps + ps.transpose(0, 2, 1))
    s, u = np.linalg.eigh(ps)
    scale = np.linalg.norm(ps, axis=(1, 2))
    floor = EIG_FLOOR * np.maximum(scale, 1e-300)
    s = np.maximum(s, floor[:, None])
    return (u * np.log(s)[:, None, :]) @ u.transpose(0, 2, 1)


def expm_batch(ss: np.ndarray) -> np.ndarray:
    ss = np.asarray(ss, dtype=np.float64)
    ss = 0.5 * (ss + ss.transpose(0, 2, 1))
    s, u = np.linalg.eigh(ss)
    return (u * np.exp(s)[:, None, :]) @ u.transpose(0, 2, 1)


def spd_exp_point(p0: np.ndarray, s_mat: np.ndarray) -> np.ndarray:
    """Exp_{P0}(S) = P0^{1/2} expm(P0^{-1/2} S P0^{-1/2}) P0^{1/2}."""
    p0 = check_spd(p0)
    s_mat = check_symmetric(s_mat)
    sq = spd_sqrt(p0)
    isq = spd_invsqrt(p0)
    out = sq @ spd_expm(isq @ s_mat @ isq) @ sq
    return 0.5 * (out + out.T)


def spd_log_point(p0: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Log_{P0}(P) = P0^{1/2} logm(P0^{-1/2} P P0^{-1/2}) P0^{1/2}."""
    p0 = check_spd(p0)
    p = check_spd(p)
    sq = spd_sqrt(p0)
    isq = spd_invsqrt(p0)
    out = sq @ spd_logm(isq @ p @ isq) @ sq
    return 0.5 * (out + out.T)


def spd_dist(p1: np.ndarray, p2: np.ndarray, metric: str = "affine") -> float:
    """Geodesic distance: affine metric 0.5 * ||logm(P1^{-1/2} P2 P1^{-1/2})||_F
    or log-Euclidean ||logm P1 - logm P2||_F."""
    p1 = check_spd(p1)
    p2 = check_spd(p2)
    if metric == "affine":
        isq = spd_invsqrt(p1)
        return 0.5 * float(np.linalg.norm(spd_logm(isq @ p2 @ isq)))
    if metric == "log-euclidean":
        return float(np.linalg.norm(spd_logm(p1) - spd_logm(p2)))
    raise ShapeError(f"unknown spd metric {metric!r}")


def sym_dim(d: int) -> int:
    return d * (d + 1) // 2


def sym_vec(s_mat: np.ndarray) -> np.ndarray:
    """Isometric vectorization of a symmetric matrix: diagonal entries
    first, then sqrt(2)-scaled strict upper triangle in row-major order.
    The Euclidean norm of the result equals the Frobenius norm."""
    s_mat = np.asarray(s_mat, dtype=np.float64)
    d = s_mat.shape[-1]
    iu = np.triu_indices(d, k=1)
    diag = s_mat[..., np.arange(d), np.arange(d)]
    off = s_mat[..., iu[0], iu[1]] * np.sqrt(2.0)
    return np.concatenate([diag, off], axis=-1)


def sym_unvec(vec: np.ndarray, d: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != sym_dim(d):
        raise ShapeError(f"vector of length {vec.shape[-1]} is not sym({d})")
    out = np.zeros(vec.shape[:-1] + (d, d))
    iu = np.triu_indices(d, k=1)
    out[..., np.arange(d), np.arange(d)] = vec[..., :d]
    off = vec[..., d:] / np.sqrt(2.0)
    out[..., iu[0], iu[1]] = off
    out[..., iu[1], iu[0]] = off
    return out


def spd_embed(p: np.ndarray) -> np.ndarray:
    """Matrix-log embedding into R^{d(d+1)/2}: sym_vec(logm(P))."""
    return sym_vec(spd_logm(check_spd(p)))


def spd_embed_batch(ps: np.ndarray) -> np.ndarray:
    return sym_vec(logm_batch(ps))


def random_spd(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """expm of a random symmetric matrix with iid N(0, scale^2) entries."""
    a = rng.standard_normal((d, d))
    return spd_expm(scale * 0.5 * (a + a.T))


def load_spd_json(path: str | Path) -> np.ndarray:
    """JSON form: a list of matrices, each an array of arrays."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    mats = np.asarray(doc, dtype=np.float64)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ShapeError(f"expected a list of square matrices in {path}")
    return mats


def load_spd_csv(path: str | Path, d: int | None = None) -> np.ndarray:
    """CSV form: one matrix per row, flattened row-major into d^2 columns."""
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    cols = rows.shape[1]
    if d is None:
        d = int(round(np.sqrt(cols)))
    if d * d != cols:
        raise ShapeError(f"{cols} columns is not a square matrix size")
    return rows.reshape(-1, d, d)
