"""Kabsch rotational alignment and RMSD metrics.

Alignment is rotation-only: inputs are assumed pre-centered and no
scale or translation is estimated.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .geom import proper_svd, rotate

# Relative threshold on the second singular value of y.T @ x below which
# the optimal rotation is not unique (collinear/planar-degenerate input).
DEGENERACY_RTOL = 1e-9


class AlignmentError(ValueError):
    """Alignment is undefined (zero cross-covariance or shape mismatch)."""


class KabschResult(NamedTuple):
    rotation: np.ndarray
    degenerate: bool


def kabsch(y: np.ndarray, x: np.ndarray) -> KabschResult:
    """Rotation minimizing ``||y - x @ r.T||^2`` over SO(3).

    Computed as ``u @ v.T`` from the sign-corrected SVD of ``y.T @ x``.
    When ``rank(y.T @ x) < 2`` the minimizer is not unique; the result is
    still returned but flagged ``degenerate=True`` so callers can fall
    back or discard.  An all-zero cross-covariance raises
    ``AlignmentError``.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape:
        raise AlignmentError(f"shape mismatch: {y.shape} vs {x.shape}")
    a = y.T @ x
    if not np.any(a):
        raise AlignmentError("y.T @ x is zero; optimal rotation undefined")
    u, s, v = proper_svd(a)
    degenerate = bool(s[1] <= DEGENERACY_RTOL * s[0])
    return KabschResult(u @ v.T, degenerate)


def rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """Root mean square deviation sqrt(||a - b||^2 / N)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AlignmentError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(np.sum(d * d) / a.shape[0]))


def aligned_rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """RMSD after optimally rotating ``b`` onto ``a``; lower-bounds rmsd."""
    r = kabsch(a, b).rotation
    return rmsd(a, rotate(r, b))
