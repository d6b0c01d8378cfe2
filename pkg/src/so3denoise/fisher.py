"""The matrix Fisher distribution on SO(3) and its small-noise moment expansion.

The distribution has unnormalized density exp(Tr[F^T R]) over SO(3).
For centered clouds ``y`` and ``x`` observed at noise level ``sigma``,
the rotation posterior is matrix Fisher with concentration
``F = y.T @ x / sigma**2``; its mode is the Kabsch rotation.

The closed-form approximation of the first moment E[R] is a series in
``sigma**2`` around the mode, with diagonal correction coefficients
``c1`` and ``c2`` in the SVD basis of the concentration matrix.  The
quadrature module provides the independent numerical reference these
formulas are validated against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import proper_svd


class ExpansionSingularError(ValueError):
    """A pairwise singular-value sum is too small for the moment expansion.

    Happens when the observed pair is nearly planar-degenerate; callers
    should fall back to the order-0 estimate or to quadrature.
    """


@dataclass(frozen=True)
class MatrixFisher:
    """Concentration parameter ``f`` (3x3) of a matrix Fisher distribution."""

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.shape != (3, 3) or not np.all(np.isfinite(f)):
            raise ValueError("concentration parameter must be a finite 3x3 matrix")
        object.__setattr__(self, "f", f)


def mf_from_observation(y: np.ndarray, x: np.ndarray, sigma: float) -> MatrixFisher:
    """Rotation-posterior parameters for observing ``y`` of ``x`` at noise ``sigma``."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {x.shape}")
    return MatrixFisher(y.T @ x / sigma**2)


def mf_log_density_unnorm(p: MatrixFisher, r: np.ndarray) -> float:
    """Unnormalized log density Tr[f^T r]."""
    return float(np.sum(p.f * np.asarray(r, dtype=float)))


def mf_mode(p: MatrixFisher) -> np.ndarray:
    """Density maximizer ``u @ v.T`` from the sign-corrected SVD of ``f``."""
    if not np.any(p.f):
        raise ValueError("mode undefined for zero concentration")
    u, _, v = proper_svd(p.f)
    return u @ v.T


def _pairwise_sums(s: np.ndarray) -> np.ndarray:
    """(s2+s3, s1+s3, s1+s2): the expansion denominator for each axis."""
    return np.array([s[1] + s[2], s[0] + s[2], s[0] + s[1]])


def _check_spectrum(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (3,):
        raise ValueError("expected a singular spectrum (s1, s2, s3)")
    sums = _pairwise_sums(s)
    if np.any(sums <= 1e-9 * s[0]):
        raise ExpansionSingularError(
            f"pairwise singular-value sums {sums} too small relative to s1={s[0]}"
        )
    return s


def c1(s: np.ndarray) -> np.ndarray:
    """First-order diagonal correction to E[R] in the SVD basis.

    Entry i is -1/2 * (1/(s_i + s_j) + 1/(s_i + s_k)) with j, k the other
    two indices.  Requires all pairwise sums positive.
    """
    s = _check_spectrum(s)
    d = _pairwise_sums(s)
    # entry i uses the two pairwise sums containing s_i, i.e. all but d[i]
    return np.array(
        [
            -0.5 * (1.0 / d[2] + 1.0 / d[1]),
            -0.5 * (1.0 / d[2] + 1.0 / d[0]),
            -0.5 * (1.0 / d[1] + 1.0 / d[0]),
        ]
    )


def c2(s: np.ndarray) -> np.ndarray:
    """Second-order diagonal correction, -1/8 of the squared-denominator sums."""
    s = _check_spectrum(s)
    d = _pairwise_sums(s)
    return np.array(
        [
            -0.125 * (1.0 / d[2] ** 2 + 1.0 / d[1] ** 2),
            -0.125 * (1.0 / d[2] ** 2 + 1.0 / d[0] ** 2),
            -0.125 * (1.0 / d[1] ** 2 + 1.0 / d[0] ** 2),
        ]
    )


def mf_mean_laplace(a: np.ndarray, sigma: float, order: int) -> np.ndarray:
    """Closed-form approximation of E[R] under MF(R; a / sigma**2).

    ``a`` is the unscaled cross-covariance ``y.T @ x``; the concentration
    1/sigma**2 is applied internally so the series reads
    ``u @ diag(1 + sigma^2 c1 + sigma^4 c2) @ v.T`` truncated at
    ``order`` (0, 1 or 2).  Order 0 is exactly the alignment rotation.
    Higher orders are generally not rotation matrices: they approximate
    a mean, which lies inside the convex hull of SO(3).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    u, s, v = proper_svd(np.asarray(a, dtype=float))
    d = np.ones(3)
    if order >= 1:
        d = d + sigma**2 * c1(s)
    if order >= 2:
        d = d + sigma**4 * c2(s)
    return (u * d) @ v.T
