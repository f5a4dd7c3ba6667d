"""scikit-learn style wrappers around the models, calibration and pipeline.

Hyperparameters are constructor arguments (so ``get_params``/``set_params``
and ``clone`` work), learned state lives in attributes ending in ``_``.
``random_state`` must be an int: every random draw here comes from
``numpy.random.default_rng`` seeded with it.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import octahedral as octa
from ._validation import (check_clouds, check_distributions, check_flip_labels,
                          check_rotations, check_seed)
from .conformal import calibrate, calibration_score, prediction_set
from .model import ModelArch, ModelParams, TrainConfig, init_params, train
from .pipeline import PipelineConfig, canonicalize, flip_distributions, raw_outputs
from .so3 import procrustes_project


class _PointModel(BaseEstimator):
    _kind = None

    def _arch(self):
        return ModelArch(self._kind, tuple(self.hidden), tuple(self.head), self.slope,
                         getattr(self, "frame", False))

    def _train_config(self):
        return TrainConfig(steps=self.steps, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, optimizer=self.optimizer,
                           schedule=self.schedule, seed=check_seed(self.random_state),
                           points=self.points, precision=self.precision,
                           jitter_deg=getattr(self, "jitter_deg", (0.0, 10.0)))

    def _fit(self, X, orientations=None):
        clouds = check_clouds(X, min_points=8, same_size=True)
        seed = check_seed(self.random_state)
        result = train(init_params(self._arch(), seed), self._train_config(), clouds,
                       orientations=orientations)
        self.params_ = result.params
        self.curve_ = np.asarray(result.curve)
        self.optimizer_state_ = result.state
        return self

    @classmethod
    def from_params(cls, params, **kwargs):
        """Wrap already trained parameters as a fitted estimator."""
        est = cls(**kwargs)
        est.params_ = params
        return est

    def _raw(self, X):
        check_is_fitted(self, "params_")
        return raw_outputs(self.params_, check_clouds(X, min_points=8))


class QuotientOrienter(_PointModel):
    """Regresses a cloud's orientation up to an octahedral flip.

    Trained on canonical clouds under random rotations with the loss
    ``min_Q ||f(R S) - R Q omega||^2``; predictions are projected onto
    SO(3).

    Parameters
    ----------
    hidden, head : tuple of int
        Per-point and post-pooling layer widths.
    slope : float
        Leaky-rectifier slope.
    frame : bool
        Express each cloud in its moment frame before the network.
    steps, batch_size, learning_rate, optimizer, schedule, points, precision
        See :class:`~symorient.model.TrainConfig`.
    random_state : int
    """

    _kind = "orienter"

    def __init__(self, hidden=(64, 128), head=(128,), slope=0.01, frame=True, steps=2000,
                 batch_size=16, learning_rate=1e-3, optimizer="adam", schedule="cosine",
                 points=512, precision="float32", random_state=0):
        self.hidden = hidden
        self.head = head
        self.slope = slope
        self.frame = frame
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.schedule = schedule
        self.points = points
        self.precision = precision
        self.random_state = random_state

    def fit(self, X, y=None):
        """Train on canonical clouds ``X``; ``y`` holds their orientations (default I)."""
        if y is not None:
            y = check_rotations(y, len(X))
        return self._fit(X, y)

    def decision_function(self, X):
        """Raw 3x3 outputs, shape ``(n, 3, 3)``."""
        return self._raw(X).reshape(-1, 3, 3)

    def predict(self, X):
        """Projected rotations, shape ``(n, 3, 3)``."""
        return np.stack([procrustes_project(m)[0] for m in self.decision_function(X)])

    def score(self, X, y):
        """Negative mean quotient distance between predictions and ``y``."""
        y = check_rotations(y, len(X))
        pred = self.predict(X)
        return -float(np.mean([octa.quotient_distance_sq(p, t)[0] for p, t in zip(pred, y)]))


class Flipper(ClassifierMixin, _PointModel):
    """Classifies which of the 24 flips maps the canonical shape to the input.

    Trained self-supervised: canonical clouds are flipped by a random ``Q``
    and jittered by a small rotation, and the label is the index of ``Q``.
    """

    _kind = "flipper"

    def __init__(self, hidden=(64, 128), head=(128,), slope=0.01, steps=2000, batch_size=16,
                 learning_rate=1e-3, optimizer="adam", schedule="cosine", points=512,
                 precision="float32", jitter_deg=(0.0, 10.0), random_state=0):
        self.hidden = hidden
        self.head = head
        self.slope = slope
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.schedule = schedule
        self.points = points
        self.precision = precision
        self.jitter_deg = jitter_deg
        self.random_state = random_state

    @property
    def classes_(self):
        return np.arange(octa.N_FLIPS)

    def fit(self, X, y=None):
        """Train on canonical clouds ``X``; labels are generated, ``y`` is ignored."""
        return self._fit(X)

    def decision_function(self, X):
        return self._raw(X)

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return flip_distributions(self.params_, check_clouds(X, min_points=8))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


class AdaptivePredictionSets(BaseEstimator):
    """Conformal flip sets at miscoverage ``alpha``.

    ``fit`` takes calibration distributions and their true flips;
    ``predict`` returns one :class:`~symorient.conformal.PredictionSet` per row.
    """

    def __init__(self, alpha=0.3):
        self.alpha = alpha

    def fit(self, X, y):
        P = check_distributions(X)
        y = check_flip_labels(y, len(P))
        scores = [calibration_score(p, t) for p, t in zip(P, y)]
        self.calibration_ = calibrate(scores, self.alpha)
        self.scores_ = np.asarray(scores)
        return self

    def predict(self, X):
        check_is_fitted(self, "calibration_")
        return [prediction_set(p, self.calibration_) for p in check_distributions(X)]

    def predict_mask(self, X):
        """Boolean ``(n, 24)`` membership matrix."""
        mask = np.zeros((len(X), octa.N_FLIPS), dtype=bool)
        for i, s in enumerate(self.predict(X)):
            mask[i, list(s.flips)] = True
        return mask


def _params_of(model, kind):
    if isinstance(model, ModelParams):
        return model
    if isinstance(model, _PointModel):
        check_is_fitted(model, "params_")
        return model.params_
    if callable(model):
        return model
    raise TypeError(f"{kind} must be a fitted estimator, ModelParams or callable")


class OrientationPipeline(TransformerMixin, BaseEstimator):
    """Rotated clouds in, canonical-pose clouds out.

    Parameters
    ----------
    orienter : QuotientOrienter, ModelParams or callable
    flipper : Flipper, ModelParams or callable
    tta : bool
    orient_k, flip_k : int
        TTA draws per stage.
    random_state : int
        Cloud ``i`` of a ``transform`` call uses ``default_rng([random_state, i])``.
    """

    def __init__(self, orienter=None, flipper=None, tta=True, orient_k=8, flip_k=8,
                 random_state=0):
        self.orienter = orienter
        self.flipper = flipper
        self.tta = tta
        self.orient_k = orient_k
        self.flip_k = flip_k
        self.random_state = random_state

    def fit(self, X=None, y=None):
        """Nothing to learn; checks that both stages are usable."""
        self._stages()
        return self

    def _stages(self):
        return (_params_of(self.orienter, "orienter"), _params_of(self.flipper, "flipper"),
                PipelineConfig(self.tta, self.orient_k, self.flip_k))

    def estimate(self, X):
        """``(output_cloud, OrientationEstimate)`` for each cloud."""
        orienter, flipper, cfg = self._stages()
        seed = check_seed(self.random_state)
        return [canonicalize(orienter, flipper, c, cfg, np.random.default_rng([seed, i]))
                for i, c in enumerate(check_clouds(X, min_points=8))]

    def transform(self, X):
        outs = [o for o, _ in self.estimate(X)]
        if len({len(o) for o in outs}) == 1:
            return np.stack(outs)
        return outs
