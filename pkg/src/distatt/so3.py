"""
Small-matrix toolbox for SO(3).

Rotations are plain ``numpy.ndarray`` objects of shape ``(3, 3)``. Most maps
below also accept stacks of shape ``(..., 3)`` or ``(..., 3, 3)``.
"""

import numpy as np

from .errors import Degenerate, NotRotation, NotSkew, NotUnit, ZeroVector

TOL = 1e-9
SMALL_ANGLE = 1e-8
DRIFT_REPAIR = 1e-8

I3 = np.eye(3)


def hat(v):
    """
    Skew-symmetric matrix with ``hat(v) @ w == np.cross(v, w)``.

    Parameters
    ----------
    v : array_like of shape (..., 3)
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vex(S, tol=TOL):
    """Inverse of :func:`hat`; raises :class:`NotSkew` if ``S + S.T`` exceeds `tol`."""
    S = np.asarray(S, dtype=float)
    if np.max(np.abs(S + np.swapaxes(S, -1, -2)), initial=0.0) > tol:
        raise NotSkew("matrix is not skew-symmetric")
    return np.stack([S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]], axis=-1)


def pa(B):
    """Antisymmetric part ``(B - B^T) / 2``."""
    B = np.asarray(B, dtype=float)
    return 0.5 * (B - np.swapaxes(B, -1, -2))


def psi(C):
    """``vex(pa(C))``, read directly off the entries of `C`."""
    C = np.asarray(C, dtype=float)
    return 0.5 * np.stack(
        [
            C[..., 2, 1] - C[..., 1, 2],
            C[..., 0, 2] - C[..., 2, 0],
            C[..., 1, 0] - C[..., 0, 1],
        ],
        axis=-1,
    )


def _check_unit(v, tol=TOL):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise NotUnit(f"expected a finite 3-vector, got {v!r}")
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise NotUnit(f"axis {v.tolist()} is not unit length")
    return v


def angle_axis(theta, v):
    """Rodrigues rotation by `theta` radians about the unit axis `v`."""
    v = _check_unit(v)
    K = hat(v)
    return I3 + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def angle_axis_many(theta, v):
    """Vectorized :func:`angle_axis` over an array of angles with one fixed axis."""
    v = _check_unit(v)
    theta = np.asarray(theta, dtype=float)[..., None, None]
    K = hat(v)
    return I3 + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def exp_so3(w):
    """
    Matrix exponential of ``hat(w)``.

    Uses a second-order Taylor expansion when ``|w| < 1e-8``.
    """
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    K = hat(w)
    if theta < SMALL_ANGLE:
        return I3 + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return I3 + a * K + b * (K @ K)


def exp_so3_many(w):
    """Vectorized :func:`exp_so3` for ``w`` of shape (n, 3)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / (safe * safe))
    K = hat(w)
    return I3 + a[..., None, None] * K + b[..., None, None] * (K @ K)


def dist_identity(R):
    """Normalized distance ``sqrt(tr(I - R) / 4)`` to the identity, in [0, 1]."""
    R = np.asarray(R, dtype=float)
    val = 0.25 * (3.0 - np.trace(R, axis1=-2, axis2=-1))
    return np.sqrt(np.clip(val, 0.0, 1.0))


def orthogonal_projector(x):
    """Projector ``I - x x^T / |x|^2`` onto the plane orthogonal to `x`."""
    x = np.asarray(x, dtype=float)
    n2 = float(x @ x)
    if not np.sqrt(n2) > 1e-12:
        raise ZeroVector("cannot project onto the complement of a zero vector")
    return I3 - np.outer(x, x) / n2


def orthonormality_error(R):
    """Frobenius norm of ``R^T R - I`` (per matrix for stacks)."""
    R = np.asarray(R, dtype=float)
    E = np.swapaxes(R, -1, -2) @ R - I3
    return np.sqrt(np.sum(E * E, axis=(-2, -1)))


def reorthonormalize(m):
    """
    Nearest rotation to `m` in the Frobenius norm.

    This is the orthogonal polar factor ``U V^T`` of the SVD, which treats all
    columns symmetrically.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise Degenerate("expected a finite 3x3 matrix")
    if np.linalg.det(m) <= TOL:
        raise Degenerate(f"det(m) = {np.linalg.det(m):.3e} is not positive")
    U, _, Vt = np.linalg.svd(m)
    return U @ Vt


def is_rotation(R, tol=TOL):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return orthonormality_error(R) <= tol and abs(np.linalg.det(R) - 1.0) <= tol


def as_rotation(R, tol=TOL):
    """Return `R` as a float array, raising :class:`NotRotation` if invalid."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise NotRotation("matrix is not a rotation")
    return R


def random_rotation(rng):
    """Haar-uniform rotation drawn from `rng` (a ``numpy.random.Generator``)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
