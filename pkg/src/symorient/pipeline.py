"""Two-stage inference: orient up to a flip, then classify the flip.

An *orienter* is anything that maps an ``(N, 3)`` cloud to a raw 3x3 output:
a :class:`~symorient.model.ModelParams` of kind ``"orienter"`` or a plain
callable (useful for oracle stubs in tests). A *flipper* maps a cloud to 24
flip logits, again either a model or a callable. The flipper's label for a
cloud ``Q S`` is the index of ``Q``.

Given a rotated cloud ``X = R S``:

* stage 1 predicts ``P ~ R Q`` for some unknown flip ``Q``;
* the intermediate cloud ``P^T X ~ Q^T S`` is handed to the flipper, whose
  answer ``F`` should be the index of ``Q^T``;
* the output cloud is ``F^T P^T X ~ S`` and the full orientation estimate
  is ``P F ~ R``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import octahedral as octa
from .exceptions import InvalidInputError
from .geometry import apply_rotation, chamfer, check_cloud
from .model import ModelParams, forward
from .objectives import softmax
from .so3 import as_matrix, procrustes_project, random_rotations, rotation_about

#: Clouds per forward call when evaluating many copies at once.
CHUNK = 32


def _check_model(model, kind):
    if isinstance(model, ModelParams):
        if model.arch.kind != kind:
            raise InvalidInputError(f"expected a {kind} model, got a {model.arch.kind}")
    elif not callable(model):
        raise InvalidInputError(f"{kind} must be a ModelParams or a callable")


def raw_outputs(model, clouds):
    """Raw outputs for a stack of clouds, batching model evaluations."""
    if isinstance(model, ModelParams):
        parts = [forward(model, clouds[i:i + CHUNK]) for i in range(0, len(clouds), CHUNK)]
        return np.concatenate(parts)
    return np.stack([np.asarray(model(c), dtype=np.float64).ravel() for c in clouds])


def _stage1_batch(orienter, clouds):
    raw = raw_outputs(orienter, clouds).reshape(-1, 3, 3)
    return np.stack([procrustes_project(m)[0] for m in raw])


def orient_stage1(orienter, cloud):
    """Projected orienter output: a rotation ``P`` with ``P ~ R Q``."""
    _check_model(orienter, "orienter")
    cloud = check_cloud(cloud)
    return _stage1_batch(orienter, cloud[None])[0]


def _rotated_copies(cloud, rotations):
    return np.einsum("nj,kij->kni", cloud, rotations)


def tta_orient(orienter, cloud, k, rng, return_details=False):
    """Consensus stage-1 rotation over ``k`` randomly rotated copies.

    Each copy ``R_k X`` yields a candidate ``R_k^T P_k``. The candidate with
    the smallest mean squared quotient distance to the other candidates is
    returned (lowest draw index on ties).

    Returns
    -------
    rotation : ndarray of shape (3, 3)
    details : dict, only if ``return_details``
        ``candidates`` (k, 3, 3), ``mean_losses`` (k,) and ``chosen``.
    """
    _check_model(orienter, "orienter")
    cloud = check_cloud(cloud)
    if int(k) < 1:
        raise InvalidInputError("k must be >= 1")
    rots = random_rotations(rng, int(k))
    preds = _stage1_batch(orienter, _rotated_copies(cloud, rots))
    cands = np.transpose(rots, (0, 2, 1)) @ preds
    losses = np.zeros(len(cands))
    if len(cands) > 1:
        for i, a in enumerate(cands):
            d = [octa.quotient_distance_sq(a, b)[0] for j, b in enumerate(cands) if j != i]
            losses[i] = np.mean(d)
    chosen = octa.argmin_lowest(losses)
    if return_details:
        return cands[chosen], {"candidates": cands, "mean_losses": losses, "chosen": chosen}
    return cands[chosen]


def flip_distributions(flipper, clouds):
    return softmax(raw_outputs(flipper, clouds))


def flip_distribution(flipper, cloud):
    """Softmax of the flipper's logits: probabilities over the 24 flips."""
    _check_model(flipper, "flipper")
    return flip_distributions(flipper, check_cloud(cloud)[None])[0]


def tta_flip(flipper, cloud, k, rng):
    """Plurality flip over ``k`` randomly flipped copies.

    Copy ``F_k X`` gets the vote ``F_k^T g(F_k X)``, i.e.
    ``compose(inverse(F_k), pred_k)``. Ties go to the lowest flip index.

    Returns
    -------
    flip : int
    votes : ndarray of shape (24,)
        Normalised vote histogram.
    """
    _check_model(flipper, "flipper")
    cloud = check_cloud(cloud)
    if int(k) < 1:
        raise InvalidInputError("k must be >= 1")
    draws = rng.integers(0, octa.N_FLIPS, size=int(k))
    probs = flip_distributions(flipper, _rotated_copies(cloud, octa.ELEMENTS[draws]))
    counts = np.zeros(octa.N_FLIPS)
    for f, p in zip(draws, probs):
        counts[octa.COMPOSE_TABLE[octa.INVERSE_TABLE[f], octa.argmin_lowest(-p)]] += 1
    return int(np.argmax(counts)), counts / counts.sum()


@dataclass(frozen=True)
class PipelineConfig:
    """Inference settings. With ``tta=False`` both stages run a single pass."""

    tta: bool = True
    orient_k: int = 8
    flip_k: int = 8

    def __post_init__(self):
        if self.orient_k < 1 or self.flip_k < 1:
            raise InvalidInputError("TTA counts must be >= 1")


@dataclass
class OrientationEstimate:
    """Result of :func:`canonicalize`.

    ``flip_distribution`` is the single-pass flipper output on the
    stage-1-aligned cloud; it is the distribution prediction sets are built
    from. ``votes`` is the TTA vote histogram (one-hot without TTA).
    """

    stage1: np.ndarray
    flip: int
    flip_distribution: np.ndarray
    composed: np.ndarray
    votes: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "stage1": self.stage1.ravel().tolist(),
            "flip": self.flip,
            "composed": self.composed.ravel().tolist(),
            "flip_distribution": self.flip_distribution.tolist(),
            "votes": self.votes.tolist(),
            "diagnostics": {k: np.asarray(v).tolist() for k, v in self.diagnostics.items()},
        }


def canonicalize(orienter, flipper, cloud, cfg=PipelineConfig(), rng=None):
    """Map a rotated cloud back to canonical pose.

    Parameters
    ----------
    orienter, flipper : ModelParams or callable
    cloud : ndarray of shape (N, 3)
        A normalised cloud ``R S``.
    cfg : PipelineConfig
    rng : numpy.random.Generator, optional
        Source of the TTA draws; required when ``cfg.tta`` is set.

    Returns
    -------
    output : ndarray of shape (N, 3)
        ``composed^T`` applied to the centred input.
    estimate : OrientationEstimate
    """
    _check_model(orienter, "orienter")
    _check_model(flipper, "flipper")
    cloud = check_cloud(cloud)
    if cfg.tta and rng is None:
        raise InvalidInputError("TTA needs a random generator")
    diagnostics = {}
    if cfg.tta:
        stage1, details = tta_orient(orienter, cloud, cfg.orient_k, rng, return_details=True)
        diagnostics["orient_mean_losses"] = details["mean_losses"]
    else:
        stage1 = orient_stage1(orienter, cloud)
    centred = cloud - cloud.mean(axis=0)
    intermediate = apply_rotation(centred, stage1.T)
    dist = flip_distribution(flipper, intermediate)
    if cfg.tta:
        flip, votes = tta_flip(flipper, intermediate, cfg.flip_k, rng)
    else:
        flip = octa.argmin_lowest(-dist)
        votes = np.eye(octa.N_FLIPS)[flip]
    composed = stage1 @ octa.ELEMENTS[flip]
    output = apply_rotation(centred, composed.T)
    return output, OrientationEstimate(stage1, flip, dist, composed, votes, diagnostics)


def rotation_sweep(orienter, cloud, axis, step_deg, omega=None):
    """Stage-1 behaviour as a canonical cloud turns about ``axis``.

    For angles ``0, step, ..., 360 - step`` the cloud ``X_t = Rot_t S`` is
    fed to the orienter. Each row holds the angle, the quotient loss of the
    stage-1 rotation ``P_t`` against ``Rot_t omega``, and the chamfer
    distance between ``P_t^T X_t`` and the previous angle's canonicalised
    cloud (the first row wraps around to the last).

    Returns
    -------
    ndarray of shape (360 / step_deg, 3)
    """
    _check_model(orienter, "orienter")
    cloud = check_cloud(cloud)
    omega = np.eye(3) if omega is None else as_matrix(omega)
    step_deg = float(step_deg)
    if not step_deg > 0:
        raise InvalidInputError("step must be positive")
    n = 360.0 / step_deg
    if abs(n - round(n)) > 1e-9:
        raise InvalidInputError(f"step {step_deg} does not divide 360")
    angles = np.arange(int(round(n))) * step_deg
    rots = np.stack([rotation_about(axis, np.deg2rad(a)) for a in angles])
    rotated = _rotated_copies(cloud, rots)
    stage1 = _stage1_batch(orienter, rotated)
    losses = np.array([octa.quotient_distance_sq(p, r @ omega)[0]
                       for p, r in zip(stage1, rots)])
    canon = np.einsum("knj,kji->kni", rotated, stage1)
    consecutive = np.array([chamfer(canon[i], canon[i - 1]) for i in range(len(canon))])
    return np.column_stack([angles, losses, consecutive])


SWEEP_HEADER = "angle_deg,quotient_loss,consecutive_chamfer"


def sweep_csv(table):
    lines = [SWEEP_HEADER] + [f"{a:.17g},{q:.17g},{c:.17g}" for a, q, c in table]
    return "\n".join(lines) + "\n"
