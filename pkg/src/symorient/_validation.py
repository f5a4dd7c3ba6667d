"""Input checks shared by the estimator classes."""

import numpy as np

from . import octahedral as octa
from .exceptions import InvalidInputError
from .so3 import is_rotation


def check_clouds(X, min_points=1, same_size=False):
    """List of finite ``(N_i, 3)`` float arrays from an array or a sequence.

    With ``same_size=True`` a single ``(M, N, 3)`` array is returned instead.
    """
    if isinstance(X, np.ndarray) and X.ndim == 3:
        clouds = list(np.asarray(X, dtype=np.float64))
    else:
        try:
            clouds = [np.asarray(c, dtype=np.float64) for c in X]
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"could not read clouds: {exc}") from exc
    if not clouds:
        raise InvalidInputError("no clouds given")
    for i, c in enumerate(clouds):
        if c.ndim != 2 or c.shape[1] != 3:
            raise InvalidInputError(f"cloud {i} has shape {c.shape}, expected (N, 3)")
        if len(c) < min_points:
            raise InvalidInputError(f"cloud {i} has {len(c)} points, need {min_points}")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError(f"cloud {i} has non-finite coordinates")
    if same_size:
        if len({len(c) for c in clouds}) != 1:
            raise InvalidInputError("all clouds must have the same number of points")
        return np.stack(clouds)
    return clouds


def check_rotations(y, n):
    """``(n, 3, 3)`` array of proper rotations."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n, 3, 3):
        raise InvalidInputError(f"expected rotations of shape ({n}, 3, 3), got {y.shape}")
    for i, r in enumerate(y):
        if not is_rotation(r):
            raise InvalidInputError(f"entry {i} is not a rotation")
    return y


def check_flip_labels(y, n):
    y = np.asarray(y)
    if y.shape != (n,) or not np.issubdtype(y.dtype, np.integer):
        raise InvalidInputError(f"expected {n} integer flip labels")
    if y.size and (y.min() < 0 or y.max() >= octa.N_FLIPS):
        raise InvalidInputError("flip labels must lie in [0, 24)")
    return y.astype(np.int64)


def check_distributions(P):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != octa.N_FLIPS:
        raise InvalidInputError(f"expected (n, {octa.N_FLIPS}) probabilities, got {P.shape}")
    if not np.all(np.isfinite(P)) or P.min() < 0:
        raise InvalidInputError("probabilities must be finite and nonnegative")
    if np.abs(P.sum(axis=1) - 1).max() > 1e-6:
        raise InvalidInputError("each row of probabilities must sum to 1")
    return P


def check_seed(seed):
    """Nonnegative integer seed (numpy ``Generator`` seeding, not ``RandomState``)."""
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InvalidInputError(f"random_state must be a nonnegative int, got {seed!r}")
    return int(seed)
