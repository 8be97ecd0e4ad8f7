"""Weak-perspective bundle adjustment and the closed-form point solve.

The point solve gets two independent oracles: a stacked dense
least-squares solve and the vectorized all-points path, which must agree
with the scalar per-point routine bit-for-bit in exact arithmetic terms.
"""

import numpy as np
import pytest

from probatch.core import SolverConfig, classical_lm_run
from probatch.model import UnderdeterminedPointError, \
    finite_difference_jacobian
from probatch.progressive import problm_run
from probatch.problems.bundle import (BundleCameras, WeakPerspectiveModel,
                                      generate_bundle_instance,
                                      perturb_bundle_cameras,
                                      varpro_point_solve,
                                      weak_perspective_project)
from probatch.problems.geometry import so3_exp


def test_projection_direct_substitution():
    np.testing.assert_array_equal(
        weak_perspective_project(np.array([1.0, 2.0, 5.0]), 5.0),
        [0.2, 0.4])


def test_projection_linear_in_point():
    rng = np.random.default_rng(60)
    Y1, Y2 = rng.standard_normal((2, 3))
    a, b = 2.5, -0.75
    np.testing.assert_allclose(
        weak_perspective_project(a * Y1 + b * Y2, 3.0),
        a * weak_perspective_project(Y1, 3.0)
        + b * weak_perspective_project(Y2, 3.0), rtol=1e-14)


def test_projection_matches_perspective_at_nominal_depth():
    Y = np.array([0.3, -1.2, 6.0])
    np.testing.assert_allclose(weak_perspective_project(Y, 6.0),
                               Y[:2] / Y[2], rtol=1e-15)


def test_point_solve_recovers_exact_point():
    rng = np.random.default_rng(61)
    inst = generate_bundle_instance(seed=0, n_cameras=4, n_points=5)
    for j in range(5):
        got = varpro_point_solve(inst.rotations, inst.translations,
                                 inst.observations[:, j], inst.depths[j])
        np.testing.assert_allclose(got, inst.points[j], rtol=1e-10)


def test_point_solve_matches_stacked_lstsq():
    rng = np.random.default_rng(62)
    for trial in range(10):
        C = int(rng.integers(2, 6))
        rotations = np.stack([so3_exp(0.3 * rng.standard_normal(3))
                              for _ in range(C)])
        translations = rng.standard_normal((C, 3))
        obs = rng.standard_normal((C, 2))
        depth = float(rng.uniform(2.0, 9.0))
        got = varpro_point_solve(rotations, translations, obs, depth)
        A = rotations[:, :2, :].reshape(2 * C, 3) / depth
        b = (obs - translations[:, :2] / depth).reshape(2 * C)
        want = np.linalg.lstsq(A, b, rcond=None)[0]
        np.testing.assert_allclose(got, want, rtol=1e-10)


def test_point_solve_underdetermined():
    rng = np.random.default_rng(63)
    R = so3_exp(rng.standard_normal(3))[None]
    with pytest.raises(UnderdeterminedPointError):
        varpro_point_solve(R, np.zeros((1, 3)), np.zeros((1, 2)), 5.0)


def test_vectorized_points_match_scalar_solve():
    inst = generate_bundle_instance(seed=1, n_cameras=3, n_points=40,
                                    noise=0.01)
    model = inst.model()
    cams = inst.cameras_true()
    X = model.solve_points(cams)
    for j in range(40):
        want = varpro_point_solve(inst.rotations, inst.translations,
                                  inst.observations[:, j], inst.depths[j])
        np.testing.assert_allclose(X[j], want, rtol=1e-12, atol=1e-12)


def test_ground_truth_cost_is_zero():
    inst = generate_bundle_instance(seed=2, n_cameras=3, n_points=60)
    model = inst.model()
    cams = inst.cameras_true()
    model.prepare(cams)
    assert model.total_cost(cams) <= 1e-22


def test_jacobian_matches_finite_differences():
    inst = generate_bundle_instance(seed=3, n_cameras=3, n_points=20,
                                    noise=0.005)
    model = inst.model()
    rng = np.random.default_rng(64)
    cams = perturb_bundle_cameras(inst.cameras_true(), rng)
    model.prepare(cams)  # points frozen for the whole check
    idx = np.arange(model.n_residuals)
    _, jac = model.eval_blocks_with_jacobian(idx, cams)
    for i in range(0, model.n_residuals, 7):
        fd = finite_difference_jacobian(model, i, cams)
        np.testing.assert_allclose(jac[i], fd, rtol=1e-5, atol=1e-8)


def test_gauge_fixing_leaves_first_camera_untouched():
    inst = generate_bundle_instance(seed=4, n_cameras=3, n_points=10)
    cams = inst.cameras_true()
    assert cams.dim == 12
    delta = np.ones(12)
    moved = cams.plus(delta)
    np.testing.assert_array_equal(moved.rotations[0], cams.rotations[0])
    np.testing.assert_array_equal(moved.translations[0],
                                  cams.translations[0])
    assert not np.allclose(moved.translations[1], cams.translations[1])
    with pytest.raises(ValueError):
        cams.plus(np.ones(11))


def test_model_validation():
    with pytest.raises(ValueError):
        WeakPerspectiveModel(np.zeros((1, 5, 2)), np.ones(5))
    with pytest.raises(ValueError):
        WeakPerspectiveModel(np.zeros((2, 5, 3)), np.ones(5))
    with pytest.raises(ValueError):
        WeakPerspectiveModel(np.zeros((2, 5, 2)), np.zeros(5))
    with pytest.raises(ValueError):
        generate_bundle_instance(seed=0, n_cameras=1)
    model = generate_bundle_instance(seed=0).model()
    with pytest.raises(RuntimeError):
        model.eval_blocks(np.arange(3), None)  # no prepare yet


def test_point_refresh_never_increases_cost():
    inst = generate_bundle_instance(seed=5, n_cameras=3, n_points=50,
                                    noise=0.01)
    model = inst.model()
    rng = np.random.default_rng(65)
    for trial in range(10):
        cams = perturb_bundle_cameras(inst.cameras_true(), rng,
                                      rot_scale=0.05, trans_scale=0.1)
        model.prepare(inst.cameras_true())
        stale = model.total_cost(cams)
        model.prepare(cams)
        fresh = model.total_cost(cams)
        assert fresh <= stale + 1e-15


def test_batched_and_classical_agree_on_bundle():
    inst = generate_bundle_instance(seed=6, n_cameras=3, n_points=100,
                                    noise=0.005)
    rng = np.random.default_rng(66)
    theta0 = perturb_bundle_cameras(inst.cameras_true(), rng)
    cfg = SolverConfig(seed=0, k0_fraction=0.1, max_iter=400)
    ref = classical_lm_run(inst.model(), theta0, cfg)
    got = problm_run(inst.model(), theta0, cfg)
    assert abs(got.final_cost - ref.final_cost) <= 1e-3 * ref.final_cost
    start = inst.model()
    start.prepare(theta0)
    assert ref.final_cost < start.total_cost(theta0)
