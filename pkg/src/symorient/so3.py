"""Deterministic SO(3) numerics.

Rotations are plain ``(3, 3)`` float arrays. When a rotation is read as an
orientation its columns are the side-, up- and front-axes of a shape, so the
up-axis of ``omega`` is ``omega[:, 1]``.

Random draws take a :class:`numpy.random.Generator`; equal seeds and equal
call sequences give equal outputs.
"""

import numpy as np

from .exceptions import InvalidInputError

#: Relative singular-value gap below which a projection is flagged degenerate.
DEGENERACY_RTOL = 1e-7


def as_matrix(m):
    """Return ``m`` as a finite ``(3, 3)`` float64 array."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise InvalidInputError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix has non-finite entries")
    return m


def is_rotation(m, tol=1e-9):
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    return (np.linalg.norm(m.T @ m - np.eye(3)) <= tol
            and abs(np.linalg.det(m) - 1.0) <= tol)


def check_rotation(m, tol=1e-9):
    """Validate that ``m`` is a proper rotation and return it as an array."""
    m = as_matrix(m)
    if not is_rotation(m, tol):
        raise InvalidInputError("matrix is not a proper rotation")
    return m


def procrustes_project(m):
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense.

    Solves ``argmin_{R in SO(3)} ||R - m||_F`` through the SVD
    ``m = U diag(s) V^T`` with the determinant of the last singular direction
    flipped when needed.

    Singular vectors are sign-normalised before recomposition: each right
    singular vector is negated (with its left partner) if its
    largest-magnitude entry is negative. When the smallest singular value is
    zero the minimiser is not unique; the result is then whatever this sign
    convention picks out of LAPACK's null-space basis, which is stable for a
    given input.

    Parameters
    ----------
    m : array-like of shape (3, 3)

    Returns
    -------
    rotation : ndarray of shape (3, 3)
    degenerate : bool
        True when ``s_min < 1e-7 * s_max`` (or ``m`` is zero).
    """
    m = as_matrix(m)
    u, s, vt = np.linalg.svd(m)
    for i in range(3):
        j = np.argmax(np.abs(vt[i]))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
            u[:, i] = -u[:, i]
    d = 1.0 if np.linalg.det(u @ vt) > 0 else -1.0
    rotation = (u * np.array([1.0, 1.0, d])) @ vt
    degenerate = bool(s[0] == 0.0 or s[-1] < DEGENERACY_RTOL * s[0])
    return rotation, degenerate


def random_rotation(rng):
    """Draw one Haar-uniform rotation (normalised Gaussian quaternion)."""
    return random_rotations(rng, 1)[0]


def random_rotations(rng, n):
    """Draw ``n`` Haar-uniform rotations as an ``(n, 3, 3)`` array."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    out = np.empty((n, 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def frobenius_sq(a, b):
    """Squared Frobenius distance ``sum_ij (a_ij - b_ij)**2``."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sum(diff * diff))


def _unit(v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} must be a finite 3-vector")
    n = np.linalg.norm(v)
    if n == 0.0:
        raise InvalidInputError(f"{name} has zero length")
    return v / n


def axis_angular_error(u, v):
    """Angle in radians between two directions, in ``[0, pi]``."""
    u = _unit(u, "u")
    v = _unit(v, "v")
    return float(np.arccos(np.clip(np.dot(u, v), -1.0, 1.0)))


def rotation_angle(r):
    """Rotation angle of ``r`` in radians."""
    r = np.asarray(r, dtype=np.float64)
    return float(np.arccos(np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)))


def rotation_about(axis, angle):
    """Rotation by ``angle`` radians about ``axis`` (Rodrigues' formula)."""
    k = _unit(axis, "axis")
    kx = np.array([[0.0, -k[2], k[1]],
                   [k[2], 0.0, -k[0]],
                   [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_to_list(r):
    """Row-major list of 9 floats, the JSON form of a rotation."""
    return [float(x) for x in np.asarray(r, dtype=np.float64).reshape(9)]


def rotation_from_list(values, tol=1e-9):
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (9,):
        raise InvalidInputError("a serialized rotation has exactly 9 entries")
    return check_rotation(values.reshape(3, 3), tol)
