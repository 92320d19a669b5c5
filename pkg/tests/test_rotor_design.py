import numpy as np
import pytest

from deltarobot.geometry import axis_angle
from deltarobot.isres import OptimizerError, isres, stochastic_rank
from deltarobot.robot_model import default_model
from deltarobot.rotor_design import (
    ALPHA_RANGES,
    SYMMETRIC_RANGES,
    DegenerateSetError,
    design_objective,
    facet_distances,
    hull_facets,
    hull_min_distance,
    min_feasible_torque,
    optimize_tilt,
    torque_generators,
)


def test_orthonormal_generators():
    assert min_feasible_torque(np.eye(3), 26.5) == pytest.approx(26.5)


def test_homogeneity(rng):
    v = rng.normal(size=(9, 3))
    assert min_feasible_torque(3.7 * v) == pytest.approx(3.7 * min_feasible_torque(v), rel=1e-12)


def test_rotation_invariance(rng):
    v = rng.normal(size=(9, 3))
    R = axis_angle(rng.normal(size=3), 1.2)
    assert min_feasible_torque(v @ R.T) == pytest.approx(min_feasible_torque(v), rel=1e-12)


def test_parallel_pairs_skipped_or_degenerate():
    with pytest.raises(DegenerateSetError):
        min_feasible_torque(np.array([[1.0, 0, 0], [2.0, 0, 0], [-1.0, 0, 0]]))
    v = np.array([[1.0, 0, 0], [2.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    assert len(facet_distances(v)) == 5


def test_formula_matches_hull_on_symmetric_ranges(rng):
    for _ in range(20):
        v = rng.normal(size=(9, 3))
        assert min_feasible_torque(v) == pytest.approx(hull_min_distance(v, SYMMETRIC_RANGES), rel=1e-6)


def test_formula_matches_hull_on_model(model):
    v = torque_generators(model).vectors
    assert min_feasible_torque(v, 26.5) == pytest.approx(hull_min_distance(v, SYMMETRIC_RANGES, 26.5), rel=1e-6)


def test_asymmetric_ranges_never_exceed_formula(model, rng):
    # the one-sided along-link range only shrinks the set
    v = torque_generators(model).vectors
    assert hull_min_distance(v, ALPHA_RANGES) <= min_feasible_torque(v) + 1e-12


def test_generator_rows_follow_rotor_maps(model):
    gen = torque_generators(model)
    assert gen.vectors.shape == (9, 3)
    assert gen.triplets.shape == (3, 3, 3)
    untilted = torque_generators(model, tilt=np.zeros(3))
    np.testing.assert_allclose(untilted.triplets[:, 0, :], 0.0, atol=1e-16)


def test_hull_facets_are_unit_normals(model):
    gen = torque_generators(model)
    eq, verts = hull_facets(gen.vectors, gen.ranges, model.thrust_max)
    np.testing.assert_allclose(np.linalg.norm(eq[:, :3], axis=1), 1.0, rtol=1e-12)
    assert np.all(eq[:, :3] @ verts.T + eq[:, 3:4] <= 1e-9)


def test_objective_at_zero_tilt(model):
    tau0 = min_feasible_torque(torque_generators(model, tilt=np.zeros(3)))
    assert design_objective(np.zeros(3), model, 4.0, 1.0) == pytest.approx(4.0 * tau0, rel=1e-14)


def test_objective_mirror_symmetry():
    plus = default_model(spin=(1, -1, 1))
    minus = default_model(spin=(-1, 1, -1))
    theta = np.array([0.1, -0.2, 0.05])
    assert design_objective(theta, plus) == pytest.approx(design_objective(-theta, minus), rel=1e-12)


def test_large_penalty_keeps_tilt_at_zero(model):
    res = optimize_tilt(model, w2=1e6, seed=3, max_evals=3000)
    assert np.max(np.abs(res.tilt)) < 1e-3


def test_design_determinism(model):
    a = optimize_tilt(model, seed=11, max_evals=2000)
    b = optimize_tilt(model, seed=11, max_evals=2000)
    assert a.tilt.tobytes() == b.tilt.tobytes()
    assert (a.tau_min, a.objective, a.evaluations) == (b.tau_min, b.objective, b.evaluations)


def test_never_worse_than_untilted(model):
    res = optimize_tilt(model, seed=5, max_evals=2000)
    assert res.objective >= res.objective_untilted - 1e-12
    assert res.evaluations <= 2000 + 105


def test_isres_quadratic_bowl():
    target = np.array([0.3, -1.2, 0.7])
    res = isres(lambda x: float(np.sum((x - target) ** 2)), [-2] * 3, [2] * 3, max_evals=30000, seed=0)
    assert np.max(np.abs(res.x - target)) < 1e-3


def test_isres_respects_constraints():
    res = isres(lambda x: float(x @ x), [-2, -2], [2, 2], constraints=[lambda x: 1.0 - x[0]], max_evals=20000, seed=1)
    assert res.violation == 0.0
    assert res.x[0] == pytest.approx(1.0, abs=1e-3)


def test_isres_reports_infeasible_problem():
    with pytest.raises(OptimizerError):
        isres(lambda x: 0.0, [0.0], [1.0], constraints=[lambda x: 5.0], max_evals=500, seed=0)


def test_stochastic_rank_feasible_is_sort(rng):
    f = rng.normal(size=20)
    assert np.array_equal(stochastic_rank(f, np.zeros(20), rng), np.argsort(f, kind="stable"))
