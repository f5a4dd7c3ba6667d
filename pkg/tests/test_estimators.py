import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from _oracles import OracleFlipper, OracleOrienter
from symorient.conformal import calibration_score
from symorient.estimators import (AdaptivePredictionSets, Flipper, OrientationPipeline,
                                  QuotientOrienter)
from symorient.exceptions import InvalidInputError
from symorient.geometry import apply_rotation, chamfer
from symorient.shapes import SyntheticShapeSpec, make_shape
from symorient.so3 import is_rotation, random_rotation

FAST = dict(hidden=(8, 16), head=(8,), steps=5, batch_size=2, points=16)


def _clouds(n=3, points=32):
    rng = np.random.default_rng(0)
    return np.stack([make_shape(SyntheticShapeSpec("chair"), points, rng) for _ in range(n)])


def test_get_params_and_clone():
    est = QuotientOrienter(steps=7, random_state=3)
    params = est.get_params()
    assert params["steps"] == 7 and params["random_state"] == 3 and params["frame"] is True
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    assert Flipper().set_params(steps=2).steps == 2


def test_orienter_fit_predict():
    X = _clouds()
    est = QuotientOrienter(**FAST).fit(X)
    assert est.curve_.shape == (5,)
    pred = est.predict(X)
    assert pred.shape == (3, 3, 3) and all(is_rotation(p) for p in pred)
    assert est.decision_function(X).shape == (3, 3, 3)
    assert est.score(X, np.stack([np.eye(3)] * 3)) <= 0
    again = QuotientOrienter(**FAST).fit(X)
    assert np.array_equal(again.params_.vector, est.params_.vector)


def test_flipper_fit_predict():
    X = _clouds()
    est = Flipper(**FAST).fit(X)
    proba = est.predict_proba(X)
    assert proba.shape == (3, 24) and np.allclose(proba.sum(axis=1), 1)
    assert np.array_equal(est.predict(X), proba.argmax(axis=1))
    assert list(est.classes_) == list(range(24))


def test_not_fitted_and_bad_input():
    with pytest.raises(NotFittedError):
        Flipper().predict(_clouds())
    with pytest.raises(InvalidInputError):
        QuotientOrienter(**FAST).fit(np.zeros((2, 4, 3)))
    with pytest.raises(InvalidInputError):
        QuotientOrienter(**FAST, random_state=-1).fit(_clouds())


def test_prediction_sets_estimator():
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(24) * 0.3, size=40)
    y = np.array([rng.choice(24, p=p) for p in P])
    aps = AdaptivePredictionSets(alpha=0.3).fit(P, y)
    assert aps.scores_[0] == calibration_score(P[0], y[0])
    sets = aps.predict(P[:5])
    mask = aps.predict_mask(P[:5])
    assert mask.shape == (5, 24)
    for s, row in zip(sets, mask):
        assert set(np.flatnonzero(row)) == set(s.flips)


def test_pipeline_with_oracles():
    rng = np.random.default_rng(1)
    s = make_shape(SyntheticShapeSpec("bench"), 64, rng, symmetrize=True)
    X = np.stack([apply_rotation(s, random_rotation(rng)) for _ in range(3)])
    pipe = OrientationPipeline(OracleOrienter(s, 7), OracleFlipper(s), orient_k=3, flip_k=3)
    out = pipe.fit().transform(X)
    assert out.shape == X.shape
    for o in out:
        assert chamfer(o, s) < 1e-9
    assert clone(pipe).get_params()["orient_k"] == 3


def test_pipeline_with_fitted_estimators():
    X = _clouds()
    pipe = OrientationPipeline(QuotientOrienter(**FAST).fit(X), Flipper(**FAST).fit(X),
                               tta=False)
    (out, est), = pipe.estimate(X[:1])
    assert is_rotation(est.composed) and out.shape == X[0].shape
    with pytest.raises(TypeError):
        OrientationPipeline("nope", "nope").fit()
