# tests/test_recovery.py
import math

import numpy as np
import pytest

from csmil.core.errors import PreconditionError
from csmil.core.serialization import read_csv
from csmil.recovery.diagnostics import coherence, design_diagnostics, kkt_residual, re_constant
from csmil.recovery.lasso import lasso_ista, lasso_objective, lipschitz_constant
from csmil.recovery.schemas import PhaseRow, PhaseTable, RecoveryConfig, ScalingConfig
from csmil.recovery.service import (
    PHASE_COLUMNS,
    error_bound_constant,
    export_phase_table,
    fit_scaling_law,
    gamma_rule,
    gen_linear_problem,
    minimal_m_for_success,
    phase_transition,
    run_phase,
    scaling_study,
    support_recovered,
)


def coordinate_descent(Z, y, gamma, sweeps=100000, tol=1e-15):
    M, K = Z.shape
    beta = np.zeros(K)
    squared = (Z * Z).sum(axis=0) / M
    for _ in range(sweeps):
        largest = 0.0
        for k in range(K):
            partial = y - Z @ beta + Z[:, k] * beta[k]
            rho = Z[:, k] @ partial / M
            updated = np.sign(rho) * max(abs(rho) - gamma, 0.0) / squared[k]
            largest = max(largest, abs(updated - beta[k]))
            beta[k] = updated
        if largest < tol:
            break
    return beta


def orthogonal_design(M, K, seed=0):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((M, K)))
    return math.sqrt(M) * q


def test_generated_problem():
    problem = gen_linear_problem(K=20, s=3, M=40, sigma=0.1, beta_min=0.5, seed=4)
    np.testing.assert_allclose(np.linalg.norm(problem.Z, axis=0), math.sqrt(40))
    assert problem.s == 3
    magnitudes = np.abs(problem.beta_star[problem.support])
    assert np.all((magnitudes >= 0.5) & (magnitudes <= 1.0))
    again = gen_linear_problem(K=20, s=3, M=40, sigma=0.1, beta_min=0.5, seed=4)
    assert np.array_equal(problem.y, again.y)


def test_noiseless_problem_is_exact():
    problem = gen_linear_problem(K=10, s=2, M=12, sigma=0.0, beta_min=1.0, seed=1)
    assert np.array_equal(problem.y, problem.Z @ problem.beta_star)


def test_dense_problem():
    problem = gen_linear_problem(K=5, s=5, M=10, sigma=0.0, beta_min=1.0, seed=0)
    assert problem.support == [0, 1, 2, 3, 4]


def test_generator_preconditions():
    with pytest.raises(PreconditionError):
        gen_linear_problem(K=4, s=5, M=10, sigma=0.0, beta_min=1.0, seed=0)
    with pytest.raises(PreconditionError):
        gen_linear_problem(K=4, s=0, M=10, sigma=0.0, beta_min=1.0, seed=0)


def test_lipschitz_constant(rng):
    Z = rng.normal(size=(30, 6))
    expected = np.linalg.eigvalsh(Z.T @ Z / 30)[-1]
    assert lipschitz_constant(Z) == pytest.approx(expected, rel=1e-8)
    assert lipschitz_constant(np.zeros((5, 3))) == 0.0


def test_orthogonal_design_has_closed_form(rng):
    Z = orthogonal_design(20, 5)
    y = rng.normal(size=20)
    correlation = Z.T @ y / 20
    expected = np.sign(correlation) * np.maximum(np.abs(correlation) - 0.3, 0.0)
    solution = lasso_ista(Z, y, 0.3)
    np.testing.assert_allclose(solution.beta_hat, expected, atol=1e-12)
    assert solution.converged


def test_gamma_max_gives_zero_in_one_step(rng):
    Z = rng.normal(size=(15, 6))
    y = rng.normal(size=15)
    gamma = np.max(np.abs(Z.T @ y)) / 15
    for accelerated in (False, True):
        solution = lasso_ista(Z, y, gamma, accelerated=accelerated)
        assert solution.beta_hat.tolist() == [0.0] * 6
        assert solution.iterations == 1


def test_matches_coordinate_descent_reference():
    problem = gen_linear_problem(K=2, s=1, M=8, sigma=0.05, beta_min=1.0, seed=0)
    reference = coordinate_descent(problem.Z, problem.y, 0.05)
    solution = lasso_ista(problem.Z, problem.y, 0.05, tol=1e-16, accelerated=True)
    assert np.max(np.abs(solution.beta_hat - reference)) < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_ista_fista_and_coordinate_descent_agree(seed):
    rng = np.random.default_rng(seed)
    M, K = int(rng.integers(30, 60)), int(rng.integers(2, 7))
    Z = rng.normal(size=(M, K))
    y = rng.normal(size=M)
    gamma = 0.05 * np.max(np.abs(Z.T @ y)) / M
    reference = coordinate_descent(Z, y, gamma)
    ista = lasso_ista(Z, y, gamma, max_iter=200000, tol=1e-16, accelerated=False)
    fista = lasso_ista(Z, y, gamma, max_iter=200000, tol=1e-16, accelerated=True)
    assert np.max(np.abs(ista.beta_hat - reference)) < 1e-5
    assert np.max(np.abs(fista.beta_hat - reference)) < 1e-5


def test_ista_objective_never_increases(rng):
    Z = rng.normal(size=(25, 10))
    y = rng.normal(size=25)
    solution = lasso_ista(Z, y, 0.1, accelerated=False)
    history = np.array(solution.objective_history)
    assert np.all(np.diff(history) <= 1e-14 * history[:-1])
    assert solution.final_objective == pytest.approx(lasso_objective(Z, y, solution.beta_hat, 0.1))


def test_solution_satisfies_kkt(rng):
    Z = rng.normal(size=(40, 12))
    y = rng.normal(size=40)
    solution = lasso_ista(Z, y, 0.2, tol=1e-16, accelerated=True)
    assert kkt_residual(Z, y, solution.beta_hat, 0.2) < 1e-6
    assert kkt_residual(Z, y, np.ones(12), 0.2) > 1e-3


def test_lasso_preconditions(rng):
    with pytest.raises(PreconditionError):
        lasso_ista(rng.normal(size=(4, 2)), rng.normal(size=4), -1.0)
    with pytest.raises(PreconditionError):
        lasso_ista(rng.normal(size=(4, 2)), rng.normal(size=5), 0.1)


def test_coherence():
    assert coherence(orthogonal_design(10, 4)) == pytest.approx(0.0, abs=1e-12)
    Z = np.random.default_rng(0).normal(size=(10, 3))
    Z[:, 2] = Z[:, 0]
    assert coherence(Z) == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        coherence(np.ones((3, 1)))


def test_restricted_eigenvalue():
    Z = orthogonal_design(12, 5)
    for s in (1, 2, 3):
        assert re_constant(Z, s) == pytest.approx(1.0)
    duplicated = np.random.default_rng(1).normal(size=(12, 4))
    duplicated[:, 3] = duplicated[:, 1]
    assert re_constant(duplicated, 2) == pytest.approx(0.0, abs=1e-12)
    assert re_constant(duplicated, 1) == pytest.approx(np.min((duplicated**2).sum(axis=0)) / 12)
    with pytest.raises(PreconditionError):
        re_constant(np.ones((3, 25)), 2)


def test_design_diagnostics_downsamples_wide_designs(rng):
    Z = rng.normal(size=(40, 30))
    report = design_diagnostics(Z, [1, 2], seed=3)
    assert len(report.columns) == 12
    assert report.columns == sorted(report.columns)
    assert set(report.kappa_s) == {1, 2}
    assert report.mu == pytest.approx(coherence(Z))
    assert design_diagnostics(Z, [1, 2], seed=3).columns == report.columns
    assert design_diagnostics(Z[:, :8], [1], seed=3).columns is None


def test_support_recovered():
    truth = np.array([0.0, 1.5, 0.0, -1.0])
    assert support_recovered(truth, truth)
    assert not support_recovered(np.array([0.2, 1.5, 0.0, -1.0]), truth)
    assert not support_recovered(np.array([0.0, 1.5, 0.0, 1.0]), truth)
    assert support_recovered(np.array([0.0, 1.5, 0.0, 1.0]), truth, mode="set")
    assert support_recovered(np.array([1e-9, 0.3, 0.0, -2.0]), truth)
    with pytest.raises(PreconditionError):
        support_recovered(np.zeros(3), truth)


def test_gamma_rule():
    assert gamma_rule(0.05, 64, 134) == pytest.approx(0.1 * math.sqrt(math.log(64) / 134))
    assert gamma_rule(0.0, 64, 8) == 0.0


def test_noiseless_phase_recovers_everything():
    table = phase_transition(K=8, s=2, M_grid=[16, 32], trials=5, sigma=0.0, seed=0, gamma=1e-10)
    assert table.M_values == [16, 32]
    assert [row.success_rate for row in table.rows] == [1.0, 1.0]
    assert table.gamma_rule == "override"
    assert all(row.mean_l2_error < 1e-6 for row in table.rows)


def test_phase_is_reproducible():
    cfg = RecoveryConfig(K=10, s=2, M_grid=[6, 20], trials=4)
    first = run_phase(cfg, seed=5)
    assert run_phase(cfg, seed=5) == first
    assert first.row_for(20).gamma == pytest.approx(gamma_rule(0.05, 10, 20))


def test_phase_preconditions():
    with pytest.raises(PreconditionError):
        phase_transition(K=8, s=2, M_grid=[], trials=5, sigma=0.0, seed=0)
    with pytest.raises(PreconditionError):
        phase_transition(K=8, s=2, M_grid=[8], trials=0, sigma=0.0, seed=0)


@pytest.mark.slow
def test_phase_transition_at_the_sample_complexity_threshold():
    M_threshold = math.ceil(8 * 4 * math.log(64))
    assert M_threshold == 134
    table = phase_transition(K=64, s=4, M_grid=[8, M_threshold], trials=50, sigma=0.05, seed=0)
    assert table.row_for(8).success_rate <= 0.5
    assert table.row_for(M_threshold).success_rate >= 0.9


@pytest.mark.slow
def test_scaling_study_follows_s_log_k():
    cfg = ScalingConfig()
    assert (cfg.s_values, cfg.k_values, cfg.trials) == ([2, 4], [32, 64, 128], 50)
    report = scaling_study(cfg, sigma=0.05, beta_min=1.0, seed=0)
    assert len(report.points) == 6
    assert all(point.minimal_M is not None for point in report.points)
    by_k = {(p.s, p.K): p.minimal_M for p in report.points}
    assert all(by_k[(4, K)] >= by_k[(2, K)] for K in cfg.k_values)
    assert report.fit.slope > 0
    assert report.fit.r_squared > 0.8


def _table(rates, Ms=(8, 16, 32, 48, 64), errors=None, sigma=0.05):
    errors = errors or [0.1] * len(rates)
    return PhaseTable(
        rows=[
            PhaseRow(M=M, s=2, K=16, sigma=sigma, gamma=0.01, trials=10, success_rate=r, mean_l2_error=e)
            for M, r, e in zip(Ms, rates, errors)
        ]
    )


def test_minimal_m_for_success():
    assert minimal_m_for_success(_table([0.2, 0.95, 0.85, 0.95, 1.0])) == 48
    assert minimal_m_for_success(_table([0.9, 0.9, 0.9, 0.9, 0.9])) == 8
    assert minimal_m_for_success(_table([0.2, 0.95, 0.95, 0.95, 0.5])) is None


def test_fit_scaling_law():
    fit = fit_scaling_law([(1.0, 12.0), (2.0, 20.0), (4.0, 36.0)])
    assert fit.slope == pytest.approx(8.0)
    assert fit.intercept == pytest.approx(4.0)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        fit_scaling_law([(1.0, 12.0)])
    with pytest.raises(PreconditionError):
        fit_scaling_law([(1.0, 12.0), (1.0, 14.0)])


def test_error_bound_constant():
    Ms = (16, 32, 64)
    rates = [0.05 * math.sqrt(2 * math.log(16) / M) for M in Ms]
    table = _table([1.0, 1.0, 1.0], Ms=Ms, errors=[3.0 * r for r in rates])
    assert error_bound_constant(table) == pytest.approx(3.0)
    assert error_bound_constant(_table([1.0, 1.0], Ms=(16, 32), sigma=0.0)) is None


def test_export_phase_table(tmp_path):
    table = _table([0.2, 0.95, 0.85, 0.95, 1.0])
    export_phase_table(table, tmp_path / "phase.csv")
    frame = read_csv(tmp_path / "phase.csv")
    assert list(frame.columns) == PHASE_COLUMNS
    assert frame["M"].tolist() == [8, 16, 32, 48, 64]
    assert frame["success_rate"].tolist() == [0.2, 0.95, 0.85, 0.95, 1.0]
