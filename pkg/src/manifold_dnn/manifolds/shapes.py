"""Planar landmark shapes: preshape normalization and the rank-one
Hermitian embedding that removes rotation.

A configuration of k landmarks is viewed as a complex k-vector. The
preshape removes translation (centering) and scale (unit norm); the
remaining rotation ambiguity is a complex phase, which cancels in the
outer product u u*.

Real ambient layout is interleaved: (x1, y1, ..., xk, yk).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DegenerateShapeError, ShapeError, SpecError

DEGENERATE_TOL = 1e-12


def as_complex(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u)
    if np.iscomplexobj(u):
        return u.astype(np.complex128)
    u = u.astype(np.float64)
    if u.ndim >= 1 and u.shape[-1] % 2 == 0:
        return u[..., 0::2] + 1j * u[..., 1::2]
    raise ShapeError(f"cannot view shape {u.shape} as complex landmarks")


def as_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def _to_landmarks(landmarks) -> np.ndarray:
    """Coerce (k, 2) real, (2k,) interleaved real, or (k,) complex input
    to a complex k-vector."""
    arr = np.asarray(landmarks)
    if np.iscomplexobj(arr) and arr.ndim == 1:
        return arr.astype(np.complex128)
    arr = arr.astype(np.float64)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0] + 1j * arr[:, 1]
    if arr.ndim == 1 and arr.shape[0] % 2 == 0:
        return as_complex(arr)
    raise ShapeError(f"cannot interpret landmarks of shape {arr.shape}")


def preshape(landmarks) -> np.ndarray:
    """Remove translation and scale: center at the origin, divide by the
    Frobenius norm. Returns the interleaved real (2k,) representation."""
    z = _to_landmarks(landmarks)
    k = z.shape[0]
    if k < 3:
        raise SpecError(f"need at least 3 landmarks, got {k}")
    raw_scale = float(np.linalg.norm(z))
    z = z - z.mean()
    norm = float(np.linalg.norm(z))
    if norm <= DEGENERATE_TOL * max(1.0, raw_scale):
        raise DegenerateShapeError("all landmarks coincide")
    return as_real(z / norm)


def preshape_batch(landmarks: np.ndarray) -> np.ndarray:
    """Preshape a stack (n, k, 2) or (n, 2k) of configurations."""
    arr = np.asarray(landmarks, dtype=np.float64)
    if arr.ndim == 3:
        z = arr[..., 0] + 1j * arr[..., 1]
    else:
        z = as_complex(arr)
    raw_scale = np.linalg.norm(z, axis=1)
    z = z - z.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(z, axis=1)
    if np.any(norm <= DEGENERATE_TOL * np.maximum(1.0, raw_scale)):
        raise DegenerateShapeError("a configuration has coincident landmarks")
    return as_real(z / norm[:, None])


def vw_embed(u) -> np.ndarray:
    """Features of the Hermitian rank-one matrix M = u u*: the k real
    diagonal entries, then real parts of the strict upper triangle
    (row-major), then the matching imaginary parts. Length k^2. Invariant
    to the phase of u, hence to rotations of the underlying shape."""
    z = as_complex(np.asarray(u))
    m = np.outer(z, np.conj(z))
    return _hermitian_features(m)


def vw_embed_batch(us: np.ndarray) -> np.ndarray:
    z = as_complex(np.asarray(us))
    m = z[:, :, None] * np.conj(z)[:, None, :]
    return _hermitian_features(m)


def _hermitian_features(m: np.ndarray) -> np.ndarray:
    k = m.shape[-1]
    iu = np.triu_indices(k, k=1)
    diag = m[..., np.arange(k), np.arange(k)].real
    upper = m[..., iu[0], iu[1]]
    return np.concatenate([diag, upper.real, upper.imag], axis=-1)


def vw_unembed(features: np.ndarray, k: int) -> np.ndarray:
    """Reassemble the Hermitian matrix from its feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != k * k:
        raise ShapeError(f"feature length {features.shape[-1]} is not {k}^2")
    iu = np.triu_indices(k, k=1)
    n_off = iu[0].size
    m = np.zeros((k, k), dtype=np.complex128)
    m[np.arange(k), np.arange(k)] = features[:k]
    upper = features[k : k + n_off] + 1j * features[k + n_off :]
    m[iu] = upper
    m[iu[1], iu[0]] = np.conj(upper)
    return m


def preshape_tangent_basis(base: np.ndarray) -> np.ndarray:
    """Orthonormal basis, rows (2k-3, 2k), of the tangent space at a
    preshape point: vectors that are centered (as complex landmarks) and
    orthogonal to the base. Deterministic Gram-Schmidt over the projected
    standard basis."""
    base = np.asarray(base, dtype=np.float64)
    m = base.shape[0]
    k = m // 2
    target = 2 * k - 3
    basis: list[np.ndarray] = []
    for i in range(m):
        u = np.zeros(m)
        u[i] = 1.0
        z = as_complex(u)
        u = as_real(z - z.mean())
        u = u - np.dot(u, base) * base
        for b in basis:
            u = u - np.dot(u, b) * b
        norm = np.linalg.norm(u)
        if norm > 1e-8:
            basis.append(u / norm)
        if len(basis) == target:
            break
    return np.array(basis)


def load_landmark_csv(path: str | Path) -> np.ndarray:
    """Load shapes from CSV, one per row with 2k columns
    (x1, y1, ..., xk, yk); a non-numeric header row is skipped."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(tok) for tok in first.strip().split(",")]
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if data.shape[1] % 2 != 0 or data.shape[1] < 6:
        raise ShapeError(
            f"landmark CSV must have an even number >= 6 of columns, got "
            f"{data.shape[1]}"
        )
    return data
