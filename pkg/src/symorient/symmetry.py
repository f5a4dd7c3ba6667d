"""Brute-force ground truth for shape symmetries within the octahedral group.

Only rotations in the 24-element flip group are searched, so continuous
symmetries (cylinders, cones) and discrete ones outside it (five-fold axes)
are out of model.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from . import octahedral as octa
from .geometry import ChamferReference, apply_rotation, check_cloud
from .so3 import check_rotation, frobenius_sq, procrustes_project

#: Detection tolerance for clouds closed under their symmetry group.
TOL_SYMMETRIZED = 1e-3
#: Detection tolerance for i.i.d. surface samples of >= 2048 points.
TOL_IID = 5e-3
#: Frobenius norm below which a mean of rotations counts as zero.
CANCELLED_NORM = 1e-9


def _closure(indices):
    members = set(indices) | {0}
    frontier = list(members)
    while frontier:
        a = frontier.pop()
        for b in list(members):
            for c in (octa.COMPOSE_TABLE[a, b], octa.COMPOSE_TABLE[b, a]):
                c = int(c)
                if c not in members:
                    members.add(c)
                    frontier.append(c)
    return frozenset(members)


def _is_closed(members):
    return all(int(octa.COMPOSE_TABLE[a, b]) in members
               for a in members for b in members)


@lru_cache(maxsize=None)
def subgroups():
    """All subgroups of the octahedral group, largest first.

    Every subgroup of this group is generated by at most two elements, so
    closing all pairs enumerates them.
    """
    found = {_closure(())}
    for a in range(octa.N_FLIPS):
        found.add(_closure((a,)))
    for a, b in combinations(range(octa.N_FLIPS), 2):
        found.add(_closure((a, b)))
    return tuple(sorted(found, key=lambda g: (-len(g), sorted(g))))


@dataclass(frozen=True)
class SymmetryGroup:
    """A subgroup of the flip group, stored as sorted flip indices."""

    members: tuple

    def __post_init__(self):
        members = tuple(sorted({int(m) for m in self.members}))
        if 0 not in members:
            raise ValueError("a symmetry group must contain the identity (index 0)")
        if not all(0 <= m < octa.N_FLIPS for m in members):
            raise ValueError("flip index out of range")
        if not _is_closed(set(members)):
            raise ValueError(f"{members} is not closed under composition")
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, idx):
        return idx in self.members

    def matrices(self):
        return octa.ELEMENTS[list(self.members)]

    @classmethod
    def trivial(cls):
        return cls((0,))

    @classmethod
    def full(cls):
        return cls(tuple(range(octa.N_FLIPS)))

    @classmethod
    def generated_by(cls, *rotations):
        """Smallest group containing the given octahedral rotations."""
        return cls(tuple(_closure(octa.index_of(r) for r in rotations)))


def largest_closed_subset(indices):
    """Largest subgroup contained in ``indices`` (ties: lexicographically first)."""
    indices = set(indices)
    for g in subgroups():
        if g <= indices:
            return SymmetryGroup(tuple(g))
    return SymmetryGroup.trivial()


def flip_chamfers(cloud):
    """Chamfer distance between the cloud and each of its 24 flipped copies."""
    cloud = check_cloud(cloud)
    ref = ChamferReference(cloud)
    return np.array([0.0] + [ref(apply_rotation(cloud, q)) for q in octa.ELEMENTS[1:]])


def detect_symmetries(cloud, tol=TOL_IID, return_chamfers=False):
    """Flips ``Q`` with ``chamfer(Q cloud, cloud) < tol``, repaired to a group.

    Parameters
    ----------
    cloud : ndarray of shape (N, 3)
        A normalised cloud (centroid at the origin).
    tol : float
    return_chamfers : bool
        Also return the 24 per-flip chamfer values.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    values = flip_chamfers(cloud)
    group = largest_closed_subset(np.flatnonzero(values < tol).tolist())
    if return_chamfers:
        return group, values
    return group


def oracle_report(shape_id, cloud, tol=TOL_IID):
    """JSON-ready record of a detection run."""
    group, values = detect_symmetries(cloud, tol, return_chamfers=True)
    return {"shape_id": shape_id, "tol": tol, "members": list(group.members),
            "chamfers": [float(v) for v in values]}


def euclidean_mean(rotations):
    """Arithmetic mean of rotations and its projection onto SO(3).

    Returns
    -------
    mean : ndarray of shape (3, 3)
    projected : ndarray of shape (3, 3)
    degenerate : bool
        True when the projection is not unique, or when the mean has
        cancelled to (numerically) zero.
    """
    rotations = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
    if len(rotations) == 0:
        raise ValueError("need at least one rotation")
    mean = rotations.mean(axis=0)
    projected, degenerate = procrustes_project(mean)
    # Rotations have unit-size entries, so a vanishing mean is cancellation
    # noise even when its singular values happen to be well separated.
    degenerate = degenerate or np.linalg.norm(mean) < CANCELLED_NORM
    return mean, projected, bool(degenerate)


def naive_minimizer(sym, omega, r):
    """Closed-form optimum of plain L2 orientation regression on ``r S``.

    For a shape with symmetry group ``sym`` and orientation ``omega`` the
    best single prediction is the projected mean of ``r Q omega`` over the
    group. Returns ``(rotation, degenerate)``.
    """
    omega = check_rotation(omega)
    r = check_rotation(r)
    targets = r @ sym.matrices() @ omega
    _, projected, degenerate = euclidean_mean(targets)
    return projected, degenerate


def naive_objective(pred, sym, omega, r):
    """Mean over the symmetry orbit of ``||pred - r Q omega||_F^2``.

    ``pred`` may be a single matrix or a stack of shape ``(n, 3, 3)``; the
    result is a float or an ``(n,)`` array accordingly.
    """
    pred = np.asarray(pred, dtype=np.float64)
    targets = np.asarray(r) @ sym.matrices() @ np.asarray(omega)
    if pred.ndim == 2:
        return float(np.mean([frobenius_sq(pred, t) for t in targets]))
    diff = pred[:, None] - targets[None]
    return np.einsum("nkij,nkij->nk", diff, diff).mean(axis=1)
