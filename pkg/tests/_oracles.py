"""Exact stand-ins for the two learned stages, built on known correspondences.

Each stub knows the canonical cloud ``S`` and recovers the rotation applied
to it by Kabsch alignment, relying on the pipeline preserving point order.
"""

import numpy as np

from symorient import octahedral as octa
from symorient.so3 import procrustes_project


def kabsch(moved, reference):
    """Rotation ``M`` minimising ``||moved - reference M^T||`` over matched points."""
    a = moved - moved.mean(axis=0)
    b = reference - reference.mean(axis=0)
    return procrustes_project(a.T @ b)[0]


class OracleOrienter:
    """Returns ``R Q`` for input ``R S``, with a fixed flip ``Q``."""

    def __init__(self, reference, flip=0):
        self.reference = reference
        self.flip = octa.element(flip)

    def __call__(self, cloud):
        return (kabsch(cloud, self.reference) @ self.flip).ravel()


class OracleFlipper:
    """Logits peaked at the flip ``q`` for an input ``element(q) S``."""

    def __init__(self, reference, peak=30.0):
        self.reference = reference
        self.peak = peak

    def __call__(self, cloud):
        logits = np.zeros(octa.N_FLIPS)
        logits[octa.nearest_flip(kabsch(cloud, self.reference))] = self.peak
        return logits


class Faulty:
    """Wraps a stub and returns ``bad(cloud)`` on the listed call numbers."""

    def __init__(self, inner, wrong_calls, bad):
        self.inner, self.wrong_calls, self.bad = inner, set(wrong_calls), bad
        self.calls = 0

    def __call__(self, cloud):
        i = self.calls
        self.calls += 1
        return self.bad(cloud) if i in self.wrong_calls else self.inner(cloud)
