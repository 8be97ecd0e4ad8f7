"""Kernels, IRLS reweighting and the graduated schedule.

The weight convention is pinned by derivative oracles: w(s) must be the
derivative of s -> psi(sqrt(s)), checked by central differences, and the
sqrt(2w) residual scaling must reproduce the true robust gradient.
"""

import numpy as np
import pytest

from conftest import LinearModel, random_linear_model
from probatch.core import SolverConfig, build_normal_equations, \
    classical_lm_run
from probatch.progressive import problm_run
from probatch.robust import (RobustKernel, gnc_multipliers, gnc_run,
                             irls_weight, kernel_cost_bound, kernel_value,
                             robustify)

STQ = "smooth-truncated-quadratic"


def psi_reference(tau, r):
    """Direct substitution of the truncated-quadratic formula."""
    return (tau ** 2 / 4.0) * (1.0 - max(0.0, 1.0 - r ** 2 / tau ** 2) ** 2)


def test_kernel_value_oracle_points():
    k = RobustKernel(STQ, tau=1.0)
    assert kernel_value(k, 0.0) == 0.0
    assert kernel_value(k, 0.5) == pytest.approx(7.0 / 64.0, rel=1e-15)
    assert kernel_value(RobustKernel(STQ, tau=2.0), 2.0) == 1.0
    assert kernel_value(RobustKernel(STQ, tau=2.0), 100.0) == 1.0
    # none passes squared norms through untouched
    assert kernel_value(RobustKernel("none"), 3.0) == 9.0


def test_kernel_value_bounded_and_monotone():
    k = RobustKernel(STQ, tau=0.7)
    r = np.linspace(0.0, 3.0, 400)
    v = kernel_value(k, r)
    assert np.all(v >= 0.0)
    assert np.all(v <= 0.7 ** 2 / 4.0 + 1e-15)
    assert np.all(np.diff(v) >= -1e-15)
    for ri, vi in zip(r[::37], v[::37]):
        assert vi == pytest.approx(psi_reference(0.7, ri), abs=1e-15)


def test_kernel_validation():
    with pytest.raises(ValueError):
        RobustKernel("huber")
    with pytest.raises(ValueError):
        RobustKernel(STQ, tau=0.0)
    RobustKernel("none", tau=-1.0)  # tau unused for the identity kernel


def test_irls_weight_oracle_points():
    k = RobustKernel(STQ, tau=1.0)
    assert irls_weight(k, 0.0) == 0.5
    assert irls_weight(k, 0.25) == 0.375
    assert irls_weight(k, 1.0) == 0.0
    assert irls_weight(k, 50.0) == 0.0
    assert irls_weight(RobustKernel("geman-mcclure", 1.0), 0.0) == 1.0
    assert irls_weight(RobustKernel("welsch", 1.0), 0.0) == 0.5


@pytest.mark.parametrize("kind", [STQ, "geman-mcclure", "welsch"])
def test_irls_weight_is_derivative_of_rho(kind):
    k = RobustKernel(kind, tau=0.8)
    h = 1e-7
    for s in np.linspace(0.01, 2.0, 60):
        if abs(s - k.tau ** 2) < 1e-6:
            continue  # kink of the truncated kernel
        fd = (kernel_value(k, np.sqrt(s + h)) -
              kernel_value(k, np.sqrt(s - h))) / (2.0 * h)
        assert irls_weight(k, s) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_cost_bounds():
    assert kernel_cost_bound(RobustKernel("none")) is None
    assert kernel_cost_bound(RobustKernel(STQ, 2.0)) == 1.0
    assert kernel_cost_bound(RobustKernel("geman-mcclure", 3.0)) == 9.0
    assert kernel_cost_bound(RobustKernel("welsch", 2.0)) == 2.0


def test_robustify_none_is_identity():
    rng = np.random.default_rng(30)
    model = random_linear_model(rng)
    assert robustify(model, RobustKernel("none")) is model


def test_robustify_true_cost_reported():
    rng = np.random.default_rng(31)
    model = random_linear_model(rng, n=50, p=2, d=3)
    tau = 1.3
    wrapped = robustify(model, RobustKernel(STQ, tau))
    theta = rng.standard_normal(3)
    costs = wrapped.block_costs(np.arange(50), theta)
    r = model.eval_blocks(np.arange(50), theta)
    expected = [psi_reference(tau, float(np.linalg.norm(ri))) for ri in r]
    np.testing.assert_allclose(costs, expected, rtol=1e-12)
    assert wrapped.cost_upper_bound == tau ** 2 / 4.0


def test_robustify_saturated_block_is_inert():
    # One block far beyond tau: exactly tau^2/4 of cost, nothing else.
    A = np.eye(2).reshape(2, 1, 2) * 1.0
    b = np.array([[0.0], [100.0]])
    model = LinearModel(A, b)
    wrapped = robustify(model, RobustKernel(STQ, tau=0.5))
    theta = np.zeros(2)
    ne, costs = build_normal_equations(wrapped, np.arange(2), theta)
    assert costs[1] == 0.5 ** 2 / 4.0
    assert ne.g[1] == 0.0
    assert ne.H[1, 1] == 0.0


def test_robustify_gradient_matches_weighted_assembly():
    rng = np.random.default_rng(32)
    model = random_linear_model(rng, n=40, p=2, d=3)
    kernel = RobustKernel(STQ, tau=1.1)
    wrapped = robustify(model, kernel)
    theta = rng.standard_normal(3)
    ne, _ = build_normal_equations(wrapped, np.arange(40), theta)
    r, jac = model.eval_blocks_with_jacobian(np.arange(40), theta)
    w = irls_weight(kernel, np.einsum("ij,ij->i", r, r))
    g = np.einsum("i,ipd,ip->d", 2.0 * w, jac, r)
    H = np.einsum("i,ipd,ipe->de", 2.0 * w, jac, jac)
    np.testing.assert_allclose(ne.g, g, rtol=1e-12)
    np.testing.assert_allclose(ne.H, H, rtol=1e-12)


def test_robustify_gradient_matches_finite_differences():
    rng = np.random.default_rng(33)
    model = random_linear_model(rng, n=30, p=2, d=3)
    wrapped = robustify(model, RobustKernel(STQ, tau=1.5))
    theta = 0.3 * rng.standard_normal(3)
    ne, _ = build_normal_equations(wrapped, np.arange(30), theta)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (wrapped.total_cost(theta + e) -
              wrapped.total_cost(theta - e)) / (2.0 * h)
        assert ne.g[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_gnc_multipliers():
    assert gnc_multipliers(5) == (16.0, 8.0, 4.0, 2.0, 1.0)
    assert gnc_multipliers(1) == (1.0,)
    with pytest.raises(ValueError):
        gnc_multipliers(0)


def outlier_instance(rng, n=60, d=2, outlier_frac=0.4):
    """Linear blocks, a fraction of them with corrupted targets."""
    A = rng.standard_normal((n, 1, d))
    theta_true = rng.standard_normal(d)
    b = A @ theta_true
    n_out = int(outlier_frac * n)
    b[:n_out] += rng.uniform(3.0, 6.0, size=(n_out, 1)) * \
        rng.choice([-1.0, 1.0], size=(n_out, 1))
    b += 0.01 * rng.standard_normal(b.shape)
    return LinearModel(A, b), theta_true


def test_gnc_single_level_equals_plain_robust_solve():
    rng = np.random.default_rng(34)
    model, _ = outlier_instance(rng)
    theta0 = np.zeros(2)
    kernel = RobustKernel(STQ, tau=0.5)
    cfg = SolverConfig(seed=0, k0_fraction=0.3, max_iter=200)
    direct = problm_run(robustify(model, kernel), theta0, cfg)
    via_gnc = gnc_run(model, kernel, theta0, cfg, levels=1)
    fields = lambda res: [(t.iteration, t.batch_size, t.lam, t.outcome,
                           t.batch_cost, t.evals_cum) for t in res.trace]
    assert fields(via_gnc) == fields(direct)
    assert via_gnc.final_cost == direct.final_cost


def test_gnc_markers_and_batch_persistence():
    rng = np.random.default_rng(35)
    model, theta_true = outlier_instance(rng, n=80)
    kernel = RobustKernel(STQ, tau=0.5)
    cfg = SolverConfig(seed=1, k0_fraction=0.2, max_iter=150)
    result = gnc_run(model, kernel, np.zeros(2), cfg, levels=5,
                     method="problm")
    markers = [t for t in result.trace if t.outcome == "gnc-level-advance"]
    assert len(markers) == 4
    ks = [t.batch_size for t in result.trace]
    assert ks == sorted(ks)  # batch survives level switches
    iters = [t.iteration for t in result.trace]
    assert iters == sorted(iters)
    assert len(set(iters)) == len(iters)
    np.testing.assert_allclose(result.theta, theta_true, atol=0.05)


def test_gnc_recovers_despite_outliers_where_plain_lm_cannot():
    rng = np.random.default_rng(36)
    errs_gnc, errs_plain = [], []
    for seed in range(5):
        model, theta_true = outlier_instance(rng, n=80, outlier_frac=0.45)
        kernel = RobustKernel(STQ, tau=0.5)
        cfg = SolverConfig(seed=seed, max_iter=150)
        got = gnc_run(model, kernel, np.zeros(2), cfg, levels=5, method="lm")
        plain = classical_lm_run(model, np.zeros(2), cfg)
        errs_gnc.append(np.linalg.norm(got.theta - theta_true))
        errs_plain.append(np.linalg.norm(plain.theta - theta_true))
    assert np.median(errs_gnc) < 0.05
    assert np.median(errs_plain) > 5 * np.median(errs_gnc)


def test_gnc_level_costs_non_increasing_at_full_batch():
    rng = np.random.default_rng(37)
    model, _ = outlier_instance(rng, n=50)
    kernel = RobustKernel(STQ, tau=0.5)
    result = gnc_run(model, kernel, np.zeros(2),
                     SolverConfig(seed=2, max_iter=100), levels=3,
                     method="lm")
    level = []
    for t in result.trace:
        if t.outcome == "gnc-level-advance":
            level = []
            continue
        if t.outcome == "success":
            level.append(t.batch_cost)
            assert len(level) < 2 or level[-1] <= level[-2]


def test_gnc_validation():
    rng = np.random.default_rng(38)
    model, _ = outlier_instance(rng)
    with pytest.raises(ValueError):
        gnc_run(model, RobustKernel("none"), np.zeros(2), SolverConfig())
    with pytest.raises(ValueError):
        gnc_run(model, RobustKernel(STQ, 0.5), np.zeros(2), SolverConfig(),
                method="sgd")
