"""Fixed-size real matrix algebra (2x2, 3x3, 4x4) used by every kernel.

All computation is in float64; float32 inputs are widened on entry.
Matrices are plain numpy arrays in row-major layout. Scalar entries are
addressed 1-based through :func:`entry` so formulas written with
row/column superscripts transfer without off-by-one shifts.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NotSymmetricError, SingularMatrixError

# |det| below DET_RTOL * ||m||_F^4 counts as singular (scale invariant).
DET_RTOL = 1e-12


def as_f64(m) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(m, dtype=np.float64))


def entry(m, u: int, v: int):
    """Return the (u, v)-th scalar entry with 1-based row/column indices."""
    if not (1 <= u <= 4 and 1 <= v <= 4):
        raise IndexError(f"1-based indices out of range: ({u}, {v})")
    return np.asarray(m)[..., u - 1, v - 1]


def invert4(m) -> np.ndarray:
    """Invert a 4x4 matrix (or a stack of them) with a singularity guard.

    Raises ``SingularMatrixError`` when |det| falls below a threshold
    scaled by the fourth power of the Frobenius norm, so an all-zero
    padded pixel is reported instead of producing infinities.
    """
    m = as_f64(m)
    if m.shape[-2:] != (4, 4):
        raise ValueError(f"expected trailing 4x4 shape, got {m.shape}")
    det = np.linalg.det(m)
    scale = np.sum(m * m, axis=(-2, -1)) ** 2  # ||m||_F^4
    bad = np.abs(det) <= DET_RTOL * scale
    if np.any(bad):
        if m.ndim == 2:
            raise SingularMatrixError(f"singular 4x4 matrix (det={det:.3e})")
        idx = int(np.flatnonzero(bad)[0])
        raise SingularMatrixError(
            f"singular 4x4 matrix at flat index {idx} ({int(np.sum(bad))} total)"
        )
    return np.linalg.inv(m)


class SymEig3(NamedTuple):
    """Eigenvalues (descending) and orthonormal column eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray


def sym3_eig(m, tol: float = 1e-9) -> SymEig3:
    """Eigendecomposition of a symmetric 3x3 matrix.

    Asymmetry beyond ``tol`` (relative to the Frobenius norm) raises
    ``NotSymmetricError``. The input is symmetrized before the solve so
    rounding-level asymmetry does not leak into the result.
    """
    m = as_f64(m)
    if m.shape != (3, 3):
        raise ValueError(f"expected 3x3, got {m.shape}")
    asym = np.max(np.abs(m - m.T))
    if asym > tol * max(1.0, float(np.linalg.norm(m))):
        raise NotSymmetricError(f"asymmetry {asym:.3e} exceeds tolerance")
    values, vectors = np.linalg.eigh(0.5 * (m + m.T))
    order = np.argsort(values)[::-1]
    return SymEig3(values[order], np.ascontiguousarray(vectors[:, order]))


def mat4_conjugate(m, t) -> np.ndarray:
    """Similarity transform t @ m @ t^-1 of a 4x4 matrix."""
    m = as_f64(m)
    t = as_f64(t)
    return t @ m @ invert4(t)


def orthogonality_defect(t) -> float:
    """Max-abs deviation of t @ t.T from the identity."""
    t = as_f64(t)
    n = t.shape[-1]
    return float(np.max(np.abs(t @ np.swapaxes(t, -1, -2) - np.eye(n))))
