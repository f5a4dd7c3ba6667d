import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symorient import octahedral as octa
from symorient.geometry import apply_rotation, chamfer
from symorient.shapes import FAMILY_NAMES, SyntheticShapeSpec, make_shape
from symorient.so3 import is_rotation, random_rotation, random_rotations, rot_y, rot_z
from symorient.symmetry import (TOL_IID, TOL_SYMMETRIZED, SymmetryGroup, detect_symmetries,
                                euclidean_mean, largest_closed_subset, naive_minimizer,
                                naive_objective, oracle_report, subgroups)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
Y180 = octa.index_of(rot_y(math.pi))
BENCH = SymmetryGroup((0, Y180))


def test_subgroup_count():
    # The octahedral rotation group has 30 subgroups (11 conjugacy classes).
    groups = subgroups()
    assert len(groups) == 30
    assert len(groups[0]) == 24 and groups[-1] == frozenset({0})
    for g in groups:
        assert 24 % len(g) == 0


def test_group_validation():
    with pytest.raises(ValueError):
        SymmetryGroup((1,))
    with pytest.raises(ValueError):
        SymmetryGroup((0, octa.index_of(rot_z(math.pi / 2))))
    assert len(SymmetryGroup.generated_by(rot_z(math.pi / 2))) == 4


def test_largest_closed_subset_repairs():
    z90 = octa.index_of(rot_z(math.pi / 2))
    z180 = octa.index_of(rot_z(math.pi))
    assert largest_closed_subset([0, z90, z180]).members == tuple(sorted((0, z180)))
    assert largest_closed_subset([5, 7]).members == (0,)


def test_detect_symmetrized_cube():
    cloud = make_shape(SyntheticShapeSpec("cube"), 512, np.random.default_rng(0), symmetrize=True)
    assert detect_symmetries(cloud, TOL_SYMMETRIZED).members == tuple(range(24))


def test_detect_asymmetric_tetrahedron():
    cloud = make_shape(SyntheticShapeSpec("tetra-asym"), 2048, np.random.default_rng(0))
    assert detect_symmetries(cloud, TOL_IID).members == (0,)


def test_detect_bench():
    cloud = make_shape(SyntheticShapeSpec("bench"), 2048, np.random.default_rng(0))
    assert detect_symmetries(cloud, TOL_IID).members == (0, Y180)


@pytest.mark.parametrize("family", FAMILY_NAMES)
def test_every_family_matches_its_declared_group(family):
    rng = np.random.default_rng(7)
    spec = SyntheticShapeSpec.random(family, rng)
    cloud = make_shape(spec, 512, rng, symmetrize=True)
    assert detect_symmetries(cloud, TOL_SYMMETRIZED) == spec.declared_symmetries
    iid = make_shape(spec, 2048, rng)
    assert detect_symmetries(iid, TOL_IID) == spec.declared_symmetries


@pytest.mark.parametrize("family", FAMILY_NAMES)
def test_one_to_many_labels(family):
    spec = SyntheticShapeSpec(family)
    cloud = make_shape(spec, 256, np.random.default_rng(1), symmetrize=True)
    for q in spec.declared_symmetries.members[1:]:
        mat = octa.element(q)
        assert chamfer(apply_rotation(cloud, mat), cloud) < TOL_SYMMETRIZED
        assert np.linalg.norm(mat - np.eye(3)) > 0.1


def test_oracle_report_is_json():
    cloud = make_shape(SyntheticShapeSpec("box"), 256, np.random.default_rng(0), symmetrize=True)
    doc = json.loads(json.dumps(oracle_report("box-0", cloud, TOL_SYMMETRIZED)))
    assert doc["shape_id"] == "box-0" and len(doc["chamfers"]) == 24 and len(doc["members"]) == 4


def test_detect_rejects_bad_tol():
    with pytest.raises(ValueError):
        detect_symmetries(np.random.default_rng(0).standard_normal((20, 3)), 0.0)


def test_euclidean_mean_examples():
    mean, proj, degenerate = euclidean_mean([np.eye(3)])
    assert np.array_equal(mean, np.eye(3)) and not degenerate
    assert np.abs(proj - np.eye(3)).max() < 1e-12

    mean, proj, degenerate = euclidean_mean([np.eye(3), np.diag([-1.0, 1, -1])])
    expected = np.zeros((3, 3))
    expected[1, 1] = 1
    assert np.array_equal(mean, expected) and degenerate
    assert np.allclose(proj[:, 1], [0, 1, 0], atol=1e-12)

    mean, proj, degenerate = euclidean_mean([rot_z(math.radians(30)), rot_z(math.radians(-30))])
    c = math.cos(math.radians(30))
    assert np.abs(mean - np.diag([c, c, 1])).max() < 1e-15
    assert np.abs(proj - np.eye(3)).max() < 1e-12 and not degenerate


def test_euclidean_mean_empty():
    with pytest.raises(ValueError):
        euclidean_mean([])


def test_naive_minimizer_examples():
    rng = np.random.default_rng(3)
    r, omega = random_rotation(rng), random_rotation(rng)
    proj, degenerate = naive_minimizer(SymmetryGroup.trivial(), omega, r)
    assert np.abs(proj - r @ omega).max() < 1e-12 and not degenerate

    proj, degenerate = naive_minimizer(BENCH, np.eye(3), np.eye(3))
    assert degenerate and np.allclose(proj[:, 1], [0, 1, 0], atol=1e-12)

    d2 = SymmetryGroup.generated_by(rot_y(math.pi), rot_z(math.pi))
    assert len(d2) == 4
    mean, _, degenerate = euclidean_mean(d2.matrices())
    assert np.abs(mean).max() < 1e-15 and degenerate
    assert naive_minimizer(d2, np.eye(3), np.eye(3))[1]


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([g for g in subgroups()]))
def test_naive_minimizer_equivariant(seed, members):
    sym = SymmetryGroup(tuple(members))
    rng = np.random.default_rng(seed)
    omega, r = random_rotation(rng), random_rotation(rng)
    base, degenerate = naive_minimizer(sym, omega, np.eye(3))
    if degenerate:
        return
    moved, _ = naive_minimizer(sym, omega, r)
    assert np.abs(moved - r @ base).max() < 1e-9


def test_naive_minimizer_beats_grid():
    rng = np.random.default_rng(0)
    for members in [BENCH.members, SymmetryGroup.generated_by(rot_y(math.pi / 2)).members]:
        sym = SymmetryGroup(members)
        omega, r = random_rotation(rng), random_rotation(rng)
        best, _ = naive_minimizer(sym, omega, r)
        value = naive_objective(best, sym, omega, r)
        grid = naive_objective(random_rotations(rng, 2000), sym, omega, r)
        assert grid.min() >= value - 1e-6


def test_bench_y_rotations_tie():
    values = naive_objective(np.stack([rot_y(t) for t in np.linspace(0, 2 * math.pi, 50)]),
                             BENCH, np.eye(3), np.eye(3))
    assert np.ptp(values) < 1e-9
    assert abs(values[0] - 4.0) < 1e-12
    assert is_rotation(naive_minimizer(BENCH, np.eye(3), np.eye(3))[0])
