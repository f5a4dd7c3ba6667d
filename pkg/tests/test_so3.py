import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symorient.exceptions import InvalidInputError
from symorient.so3 import (axis_angular_error, frobenius_sq, is_rotation, procrustes_project,
                           random_rotation, random_rotations, rot_x, rot_y, rot_z,
                           rotation_about, rotation_angle, rotation_from_list,
                           rotation_to_list)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_projection_of_identity():
    r, degenerate = procrustes_project(np.eye(3))
    assert np.array_equal(r, np.eye(3)) or np.abs(r - np.eye(3)).max() < 1e-15
    assert not degenerate


def test_projection_of_bench_mean_keeps_up_axis():
    m = np.zeros((3, 3))
    m[1, 1] = 1.0  # columns (0, e_y, 0)
    r, degenerate = procrustes_project(m)
    assert degenerate
    assert is_rotation(r)
    assert np.allclose(r[:, 1], [0, 1, 0], atol=1e-12)


def test_projection_of_bench_mean_is_stable_across_calls():
    m = np.zeros((3, 3))
    m[1, 1] = 1.0
    first, _ = procrustes_project(m)
    for _ in range(5):
        again, _ = procrustes_project(m.copy())
        assert np.array_equal(first, again)


def test_projection_of_positive_diagonal_is_identity():
    # SVD of diag(2, 3, 4) has U = V = permutation, product is I.
    r, degenerate = procrustes_project(np.diag([2.0, 3.0, 4.0]))
    assert np.abs(r - np.eye(3)).max() < 1e-12
    assert not degenerate


def test_projection_of_zero_is_degenerate():
    r, degenerate = procrustes_project(np.zeros((3, 3)))
    assert degenerate and is_rotation(r)


def test_projection_rejects_non_finite():
    m = np.eye(3)
    m[0, 0] = np.nan
    with pytest.raises(InvalidInputError):
        procrustes_project(m)


def test_projection_fixes_1000_random_rotations():
    rots = random_rotations(np.random.default_rng(11), 1000)
    for r in rots:
        p, degenerate = procrustes_project(r)
        assert not degenerate
        assert np.sqrt(frobenius_sq(p, r)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(min_value=1e-3, max_value=1e3))
def test_projection_scale_invariant(seed, c):
    r = random_rotation(np.random.default_rng(seed))
    p, _ = procrustes_project(c * r)
    assert np.abs(p - r).max() < 1e-9


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_projection_is_nearest_rotation(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((3, 3))
    p, _ = procrustes_project(m)
    assert is_rotation(p)
    best = frobenius_sq(p, m)
    for r in random_rotations(rng, 200):
        assert frobenius_sq(r, m) >= best - 1e-9


def test_random_rotation_is_valid_and_seeded():
    a = random_rotation(np.random.default_rng(5))
    b = random_rotation(np.random.default_rng(5))
    assert is_rotation(a)
    assert np.array_equal(a, b)


def test_random_rotations_sequence_reproducible():
    a = random_rotations(np.random.default_rng(3), 20)
    b = random_rotations(np.random.default_rng(3), 20)
    assert np.array_equal(a, b)


def test_haar_uniformity_on_ez():
    rots = random_rotations(np.random.default_rng(0), 10_000)
    mean = (rots @ np.array([0.0, 0.0, 1.0])).mean(axis=0)
    assert np.linalg.norm(mean) < 0.05


def test_haar_angle_distribution():
    # Haar rotation angles have density (1 - cos t) / pi, so E[t] = pi/2 + 2/pi.
    rots = random_rotations(np.random.default_rng(1), 20_000)
    angles = np.array([rotation_angle(r) for r in rots])
    assert abs(angles.mean() - (math.pi / 2 + 2 / math.pi)) < 0.02


def test_frobenius_examples():
    assert frobenius_sq(np.eye(3), np.eye(3)) == 0.0
    assert frobenius_sq(np.eye(3), np.diag([-1.0, 1.0, -1.0])) == 8.0


@pytest.mark.parametrize("deg", [0, 10, 45, 90, 135, 180])
def test_frobenius_of_relative_angle(deg):
    t = math.radians(deg)
    axis = np.array([0.3, -0.5, 0.8])
    a = random_rotation(np.random.default_rng(deg))
    b = a @ rotation_about(axis, t)
    assert abs(frobenius_sq(a, b) - (4 - 4 * math.cos(t))) < 1e-12


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_frobenius_left_invariant(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 3, 3))
    q = random_rotation(rng)
    assert abs(frobenius_sq(q @ a, q @ b) - frobenius_sq(a, b)) < 1e-9


def test_axis_angular_error_examples():
    ey = np.array([0.0, 1.0, 0.0])
    assert axis_angular_error(ey, ey) == 0.0
    assert abs(axis_angular_error(ey, np.array([1.0, 0, 0])) - math.pi / 2) < 1e-15
    v = np.array([0.0, math.cos(math.radians(10)), math.sin(math.radians(10))])
    assert abs(axis_angular_error(ey, v) - 0.17453292519943295) < 1e-12


def test_axis_angular_error_normalises_and_clamps():
    assert axis_angular_error([0, 2.0, 0], [0, 1.0 + 1e-12, 0]) == 0.0
    assert abs(axis_angular_error([1, 0, 0], [-3, 0, 0]) - math.pi) < 1e-12


def test_axis_angular_error_zero_vector():
    with pytest.raises(InvalidInputError):
        axis_angular_error([0, 0, 0], [0, 1, 0])


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_axis_angular_error_metric(seed):
    u, v, w = np.random.default_rng(seed).standard_normal((3, 3))
    assert axis_angular_error(u, v) == axis_angular_error(v, u)
    assert axis_angular_error(u, w) <= axis_angular_error(u, v) + axis_angular_error(v, w) + 1e-12


def test_axis_rotations():
    assert np.allclose(rot_z(math.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    assert np.allclose(rot_x(math.pi / 2) @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    assert np.allclose(rot_y(math.pi / 2) @ [0, 0, 1], [1, 0, 0], atol=1e-15)


def test_json_round_trip():
    r = random_rotation(np.random.default_rng(8))
    values = json.loads(json.dumps(rotation_to_list(r)))
    assert len(values) == 9
    back = rotation_from_list(values)
    assert np.abs(back - r).max() < 1e-12
    assert is_rotation(back)


def test_json_rejects_non_rotation():
    with pytest.raises(InvalidInputError):
        rotation_from_list([1, 0, 0, 0, 1, 0, 0, 0, -1])
