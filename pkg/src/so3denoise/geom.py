"""Point-cloud and SO(3) primitives.

Conventions used throughout the package:

* A point cloud is an ``(N, 3)`` float array of Cartesian coordinates,
  one point per row.  Centered clouds have zero column sums.
* A rotation is a ``(3, 3)`` proper orthogonal matrix.  A rotation ``r``
  acts on a cloud ``pc`` as ``pc @ r.T`` (each row rotated independently).
* Random draws always take an explicit ``numpy.random.Generator``; there
  is no hidden global state and every function here is pure.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ProperSvd(NamedTuple):
    """Sign-corrected SVD ``a = u @ diag(s) @ v.T`` with ``det(u) = det(v) = 1``.

    Singular values satisfy ``s[0] >= s[1] >= abs(s[2])``; any reflection
    in the input is absorbed into the sign of ``s[2]``.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def center(pc: np.ndarray) -> np.ndarray:
    """Subtract the centroid so each coordinate column sums to zero."""
    pc = np.asarray(pc, dtype=float)
    return pc - pc.mean(axis=0)


def rotate(r: np.ndarray, pc: np.ndarray) -> np.ndarray:
    """Apply a rotation (or any 3x3 matrix) to every point of a cloud."""
    return np.asarray(pc, dtype=float) @ np.asarray(r, dtype=float).T


def frobenius_norm_sq(pc: np.ndarray) -> float:
    """Sum of squared point norms, invariant under rotations."""
    pc = np.asarray(pc, dtype=float)
    return float(np.sum(pc * pc))


def is_rotation(m: np.ndarray, tol: float = 1e-12) -> bool:
    """True if ``m`` is orthogonal with unit determinant within ``tol``."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    ortho = np.linalg.norm(m.T @ m - np.eye(3)) <= tol
    return bool(ortho and abs(np.linalg.det(m) - 1.0) <= tol)


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions ``(..., 4)``, scalar first."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def sample_haar(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw uniformly distributed rotations (Haar measure on SO(3)).

    A unit quaternion is sampled uniformly on S^3 (four independent
    standard normals, normalized) and converted to a matrix.  With
    ``size=None`` returns a single ``(3, 3)`` matrix, otherwise
    ``(size, 3, 3)``.
    """
    n = 1 if size is None else int(size)
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    m = _quat_to_matrix(q)
    return m[0] if size is None else m


def proper_svd(a: np.ndarray) -> ProperSvd:
    """Sign-corrected SVD of a 3x3 matrix.

    Computes an ordinary SVD and, for each factor with negative
    determinant, negates its last column together with the sign of the
    smallest singular value.  If both factors are improper, both columns
    flip and ``s[2]`` is unchanged.

    Raises ``ValueError`` on non-finite input.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("proper_svd requires finite input")
    u, s, vt = np.linalg.svd(a)
    u = u.copy()
    v = vt.T.copy()
    s = s.copy()
    if np.linalg.det(u) < 0:
        u[:, 2] *= -1.0
        s[2] *= -1.0
    if np.linalg.det(v) < 0:
        v[:, 2] *= -1.0
        s[2] *= -1.0
    return ProperSvd(u, s, v)


def skew(theta: np.ndarray) -> np.ndarray:
    """Skew-symmetric (hat) matrix of a 3-vector; batched over ``(..., 3)``."""
    theta = np.asarray(theta, dtype=float)
    k = np.zeros(theta.shape[:-1] + (3, 3))
    k[..., 0, 1] = -theta[..., 2]
    k[..., 0, 2] = theta[..., 1]
    k[..., 1, 0] = theta[..., 2]
    k[..., 1, 2] = -theta[..., 0]
    k[..., 2, 0] = -theta[..., 1]
    k[..., 2, 1] = theta[..., 0]
    return k


def exp_map(theta: np.ndarray) -> np.ndarray:
    """Rodrigues exponential map so(3) -> SO(3), batched over ``(..., 3)``.

    Uses sinc-based coefficients sin(r)/r and (1 - cos r)/r^2, which are
    exact and stable through r = 0 (the identity limit).
    """
    theta = np.asarray(theta, dtype=float)
    r = np.linalg.norm(theta, axis=-1)
    a = np.sinc(r / np.pi)                      # sin(r)/r
    b = 0.5 * np.sinc(r / (2.0 * np.pi)) ** 2   # (1 - cos r)/r^2
    k = skew(theta)
    k2 = k @ k
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * k2


def _expmap_density(r: np.ndarray) -> np.ndarray:
    """Haar density (1 - cos r)/(4 pi^2 r^2) as a function of the angle r."""
    return 0.5 * np.sinc(np.asarray(r, dtype=float) / (2.0 * np.pi)) ** 2 / (4.0 * np.pi**2)


def haar_density_expmap(theta: np.ndarray) -> float:
    """Haar density of SO(3) in exponential-map coordinates.

    Returns (1 - cos ||theta||) / (4 pi^2 ||theta||^2), with the analytic
    limit 1/(8 pi^2) at theta = 0.  Valid only inside the injectivity
    ball ``||theta|| <= pi``; larger inputs raise ``ValueError``.
    """
    theta = np.asarray(theta, dtype=float)
    r = float(np.linalg.norm(theta))
    if r > np.pi + 1e-12:
        raise ValueError(f"||theta|| = {r} exceeds pi")
    return float(_expmap_density(r))
