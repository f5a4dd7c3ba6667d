"""The 24-element octahedral rotation group used as the set of "flips".

The ordering of the elements is frozen: flip labels, checkpoints and conformal
calibrations all refer to elements by index. It is built by breadth-first
closure of the 90 degree rotations about +z and +x, de-duplicated, then sorted
by the row-major integer entries in *descending* lexicographic order, which
puts the identity at index 0.
"""

import hashlib
from collections import deque

import numpy as np

from .so3 import as_matrix

N_FLIPS = 24

#: Absolute slack under which two candidate minima count as tied.
TIE_ATOL = 1e-12


def _build_elements():
    gens = [
        np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]]),  # +90 deg about z
        np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]]),  # +90 deg about x
    ]
    seen = {tuple(np.eye(3, dtype=int).ravel())}
    queue = deque([np.eye(3, dtype=int)])
    while queue:
        m = queue.popleft()
        for g in gens:
            p = g @ m
            key = tuple(p.ravel())
            if key not in seen:
                seen.add(key)
                queue.append(p)
    keys = sorted(seen, reverse=True)
    return np.array(keys, dtype=np.float64).reshape(-1, 3, 3)


ELEMENTS = _build_elements()
ELEMENTS.setflags(write=False)
assert ELEMENTS.shape == (N_FLIPS, 3, 3)
assert np.array_equal(ELEMENTS[0], np.eye(3))

_KEY_TO_INDEX = {tuple(e.astype(int).ravel()): i for i, e in enumerate(ELEMENTS)}


def _lookup(m):
    return _KEY_TO_INDEX[tuple(np.rint(m).astype(int).ravel())]


COMPOSE_TABLE = np.array(
    [[_lookup(ELEMENTS[a] @ ELEMENTS[b]) for b in range(N_FLIPS)]
     for a in range(N_FLIPS)], dtype=np.int64)
INVERSE_TABLE = np.array(
    [_lookup(ELEMENTS[a].T) for a in range(N_FLIPS)], dtype=np.int64)
COMPOSE_TABLE.setflags(write=False)
INVERSE_TABLE.setflags(write=False)


def elements():
    """Return a copy of the 24 flip matrices in canonical order."""
    return ELEMENTS.copy()


def element(idx):
    return ELEMENTS[_check_index(idx)]


def _check_index(idx):
    idx = int(idx)
    if not 0 <= idx < N_FLIPS:
        raise IndexError(f"flip index {idx} outside [0, {N_FLIPS})")
    return idx


def compose(a, b):
    """Index of ``element(a) @ element(b)``."""
    return int(COMPOSE_TABLE[_check_index(a), _check_index(b)])


def inverse(a):
    return int(INVERSE_TABLE[_check_index(a)])


def index_of(m, tol=1e-9):
    """Index of the flip equal to ``m`` within ``tol``; raises KeyError otherwise."""
    m = np.asarray(m, dtype=np.float64)
    d = np.abs(ELEMENTS - m).max(axis=(1, 2))
    i = int(np.argmin(d))
    if d[i] > tol:
        raise KeyError("matrix is not an octahedral rotation")
    return i


def argmin_lowest(values):
    best = values.min()
    return int(np.flatnonzero(values <= best + TIE_ATOL)[0])


def quotient_distances_sq(a, b):
    """``||a - b Q||_F^2`` for every flip ``Q``, as a length-24 array."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64) @ ELEMENTS
    return np.einsum("kij,kij->k", diff, diff)


def quotient_distance_sq(a, b):
    """Squared Frobenius distance from ``a`` to the flip orbit ``{b Q}``.

    Returns
    -------
    value : float
    argmin : int
        Index of the minimising flip; near-ties go to the lowest index.
    """
    values = quotient_distances_sq(as_matrix(a), as_matrix(b))
    k = argmin_lowest(values)
    return float(values[k]), k


def nearest_flip(r):
    """Index of the flip closest to ``r`` in Frobenius norm (lowest on ties)."""
    r = as_matrix(r)
    diff = ELEMENTS - r
    return argmin_lowest(np.einsum("kij,kij->k", diff, diff))


def fingerprint():
    """Short hash identifying this element ordering.

    Stored in every checkpoint and calibration record so that files written
    under a different ordering are rejected.
    """
    return hashlib.sha256(ELEMENTS.astype(np.int8).tobytes()).hexdigest()[:16]


def ordering_text():
    """Human-readable listing of the canonical ordering."""
    lines = [f"# octahedral flip ordering, fingerprint {fingerprint()}",
             "# index: row-major 3x3 integer matrix"]
    for i, e in enumerate(ELEMENTS.astype(int)):
        rows = "  ".join(" ".join(f"{x:2d}" for x in row) for row in e)
        lines.append(f"{i:2d}: {rows}")
    return "\n".join(lines) + "\n"
