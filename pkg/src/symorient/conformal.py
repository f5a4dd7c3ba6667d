"""Adaptive prediction sets over the 24 flips (no regularisation term).

A calibration score is the probability mass ranked at or above the true
flip. The threshold ``tau`` is the finite-sample conformal quantile of those
scores, and a prediction set is the shortest descending-probability prefix
whose mass reaches ``tau``.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import octahedral as octa
from .exceptions import ConfigError, InvalidInputError

MIN_CALIBRATION = 10
#: Slack when comparing cumulative mass against ``tau``.
MASS_ATOL = 1e-12


def check_distribution(probs):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (octa.N_FLIPS,):
        raise InvalidInputError(f"flip distribution must have {octa.N_FLIPS} entries")
    if not np.all(np.isfinite(probs)) or probs.min() < 0:
        raise InvalidInputError("flip probabilities must be finite and nonnegative")
    if abs(probs.sum() - 1.0) > 1e-6:
        raise InvalidInputError(f"flip probabilities sum to {probs.sum():.9g}, not 1")
    return probs


def descending_order(probs):
    """Flip indices by decreasing probability; equal values keep index order."""
    return np.argsort(-np.asarray(probs), kind="stable")


def calibration_score(probs, true_flip):
    """Mass of all flips ranked at or above ``true_flip``."""
    probs = check_distribution(probs)
    true_flip = int(true_flip)
    if not 0 <= true_flip < octa.N_FLIPS:
        raise InvalidInputError(f"flip index {true_flip} out of range")
    order = descending_order(probs)
    rank = int(np.flatnonzero(order == true_flip)[0])
    return float(min(1.0, probs[order[:rank + 1]].sum()))


@dataclass(frozen=True)
class ConformalCalibration:
    tau: float
    alpha: float
    n_cal: int
    fingerprint: str = octa.fingerprint()
    model_digest: str = ""

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidInputError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")

    def to_dict(self):
        return {"tau": self.tau, "alpha": self.alpha, "n_cal": self.n_cal,
                "fingerprint": self.fingerprint, "model_digest": self.model_digest}

    @classmethod
    def from_dict(cls, d):
        keys = {"tau", "alpha", "n_cal", "fingerprint", "model_digest"}
        if set(d) != keys:
            raise ConfigError(f"calibration record must have keys {sorted(keys)}")
        if d["fingerprint"] != octa.fingerprint():
            raise ConfigError("calibration was produced under a different flip ordering")
        return cls(float(d["tau"]), float(d["alpha"]), int(d["n_cal"]),
                   d["fingerprint"], d["model_digest"])

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def conformal_rank(n, alpha):
    """1-based rank of the finite-sample ``1 - alpha`` quantile, capped at ``n``."""
    # the epsilon keeps e.g. 11 * 0.7 = 7.699999... from rounding up past 8
    return min(n, max(1, math.ceil((n + 1) * (1.0 - alpha) - 1e-9)))


def calibrate(scores, alpha, model_digest=""):
    """Threshold ``tau`` from calibration scores at miscoverage ``alpha``."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise InvalidInputError("no calibration scores")
    if scores.size < MIN_CALIBRATION:
        raise InvalidInputError(
            f"need at least {MIN_CALIBRATION} calibration scores, got {scores.size}")
    if not np.all((scores >= 0) & (scores <= 1 + 1e-9)):
        raise InvalidInputError("calibration scores must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    k = conformal_rank(scores.size, alpha)
    tau = float(min(1.0, np.sort(scores)[k - 1]))
    return ConformalCalibration(tau, float(alpha), int(scores.size),
                                model_digest=model_digest)


@dataclass(frozen=True)
class PredictionSet:
    flips: tuple
    probs: tuple
    total_mass: float

    def __len__(self):
        return len(self.flips)

    def __contains__(self, flip):
        return int(flip) in self.flips


def prediction_set(probs, cal):
    """Shortest descending prefix of ``probs`` with mass ``>= cal.tau``."""
    if cal.fingerprint != octa.fingerprint():
        raise ConfigError("calibration was produced under a different flip ordering")
    probs = check_distribution(probs)
    order = descending_order(probs)
    if cal.tau > 1.0 - MASS_ATOL:
        size = octa.N_FLIPS
    else:
        cum = np.cumsum(probs[order])
        reached = np.flatnonzero(cum >= cal.tau - MASS_ATOL)
        size = int(reached[0]) + 1 if reached.size else octa.N_FLIPS
    chosen = order[:size]
    return PredictionSet(tuple(int(i) for i in chosen),
                         tuple(float(p) for p in probs[chosen]),
                         float(probs[chosen].sum()))


def candidate_orientations(stage1, pset):
    """``stage1 @ F`` for each flip ``F`` in the set, paired with its probability."""
    stage1 = np.asarray(stage1, dtype=np.float64)
    return [(stage1 @ octa.ELEMENTS[f], p) for f, p in zip(pset.flips, pset.probs)]
