from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import make_fold
from regsdml.crossfit import crossfit_repetitions
from regsdml.data import Method
from regsdml.data import ResidualFold
from regsdml.errors import InvalidArgumentError
from regsdml.errors import SelectionFailedError
from regsdml.estimators import Assembly
from regsdml.estimators import dml2_estimate
from regsdml.estimators import dml_estimate
from regsdml.learner import RegressorSpec
from regsdml.regularized import a_multiplier
from regsdml.regularized import aggregate_repetitions
from regsdml.regularized import argmin_objective
from regsdml.regularized import GammaGrid
from regsdml.regularized import gamma_path
from regsdml.regularized import regdml_estimate
from regsdml.regularized import regdml_estimate_transformed
from regsdml.regularized import regdml_result
from regsdml.regularized import regdml_variance
from regsdml.regularized import regsdml_from_fold_sets
from regsdml.regularized import regsdml_single_split
from regsdml.regularized import regularized_record
from regsdml.regularized import RepetitionRecord
from regsdml.regularized import select_final
from regsdml.regularized import select_gamma
from regsdml.sem.scenarios import generate
from regsdml.sem.scenarios import ScenarioSpec


def dense_regdml_variance(folds, gamma, b):
    """Plain transcription of the regularized sandwich on pooled fold averages."""
    N = sum(f.n for f in folds)
    D1 = D2 = D4 = 0.0
    for f in folds:
        A, X, Y, n = f.RA, f.RX, f.RY, f.n
        SXA, SAA, SXX = X.T @ A / n, A.T @ A / n, X.T @ X / n
        D3 = SXA @ np.linalg.inv(SAA)
        psi = A * (Y - X @ b)[:, None]
        psi_tilde = X * (Y - X @ b)[:, None]
        D5 = np.linalg.inv(SAA) @ psi.mean(axis=0)
        rows = []
        for i in range(n):
            psi1 = np.outer(X[i], A[i]) - SXA
            psi2 = np.outer(A[i], A[i]) - SAA
            rows.append(psi_tilde[i] + (gamma - 1) * (D3 @ psi[i] + psi1 @ D5 - D3 @ psi2 @ D5))
        rows = np.array(rows)
        D1 = D1 + n / N * SXX
        D2 = D2 + n / N * D3 @ SXA.T
        D4 = D4 + n / N * rows.T @ rows / n
    bread = np.linalg.inv(D1 + (gamma - 1) * D2)
    return bread @ D4 @ bread.T


def dense_regdml_estimate(folds, gamma, assembly):
    """Regularized normal equations with explicit n x n projections."""
    N = sum(f.n for f in folds)
    grams, rhs = [], []
    for f in folds:
        A, X, Y = f.RA, f.RX, f.RY
        weight = np.eye(f.n) + (gamma - 1.0) * A @ np.linalg.inv(A.T @ A) @ A.T
        grams.append(X.T @ weight @ X)
        rhs.append(X.T @ weight @ Y)
    if assembly == Assembly.DML1:
        return sum(f.n / N * np.linalg.solve(g, h) for f, g, h in zip(folds, grams, rhs))
    return np.linalg.solve(sum(grams), sum(rhs))


def test_gamma_one_is_ols():
    fold = ResidualFold(RA=[0.3, -1.0, 2.0], RX=[1.0, 2.0, 3.0], RY=[2.0, 4.0, 6.0])
    assert regdml_estimate([fold], 1.0) == pytest.approx([2.0])


def test_large_gamma_approaches_dml(folds):
    beta = dml2_estimate(folds)
    b = regdml_estimate(folds, 1e10)
    assert abs(b[0] - beta[0]) <= 1e-6 * (1.0 + abs(beta[0]))


def test_gamma_zero_partials_out_instruments(fold):
    A = fold.RA
    M = np.eye(fold.n) - A @ np.linalg.inv(A.T @ A) @ A.T
    MX, MY = M @ fold.RX, M @ fold.RY
    expected = np.linalg.lstsq(MX, MY, rcond=None)[0]
    assert np.allclose(regdml_estimate([fold], 0.0), expected, rtol=1e-8)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0, 2.0, 10.0, 1e4])
@pytest.mark.parametrize("assembly", [Assembly.DML1, Assembly.DML2])
def test_normal_and_transformed_forms_agree(rng, gamma, assembly):
    folds = [make_fold(rng, n=25, q=3, d=2, index=k) for k in range(3)]
    normal = regdml_estimate(folds, gamma, assembly)
    transformed = regdml_estimate_transformed(folds, gamma, assembly)
    assert np.allclose(normal, transformed, rtol=1e-10, atol=1e-10)


def test_invalid_gamma(fold):
    with pytest.raises(InvalidArgumentError):
        regdml_estimate([fold], -1.0)
    with pytest.raises(InvalidArgumentError):
        regdml_estimate([fold], math.inf)


def test_path_is_continuous(folds):
    grid = np.geomspace(0.1, 100.0, 200)
    path = np.array([regdml_estimate(folds, g)[0] for g in grid])
    jumps = np.abs(np.diff(path))
    assert jumps.max() <= 10.0 * (np.abs(path[-1] - path[0]) + 1e-12)


def test_variance_zero_score_at_gamma_one(rng):
    RX = rng.normal(size=(15, 1))
    fold = ResidualFold(RA=rng.normal(size=(15, 2)), RX=RX, RY=1.5 * RX[:, 0])
    b = regdml_estimate([fold], 1.0)
    assert np.allclose(regdml_variance([fold], 1.0, b), 0.0, atol=1e-20)


def test_variance_gamma_one_is_robust_ols_sandwich(fold):
    b = regdml_estimate([fold], 1.0)
    X = fold.RX
    psi_tilde = X * (fold.RY - X @ b)[:, None]
    D1_inv = np.linalg.inv(X.T @ X / fold.n)
    expected = D1_inv @ (psi_tilde.T @ psi_tilde / fold.n) @ D1_inv
    assert np.allclose(regdml_variance([fold], 1.0, b), expected, rtol=1e-10)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("assembly", [Assembly.DML1, Assembly.DML2])
def test_estimate_matches_dense_normal_equations(seed, assembly):
    rng = np.random.default_rng(500 + seed)
    d = 1 + seed % 2
    q = d + int(rng.integers(0, 3))
    gamma = float(rng.choice([0.0, 0.3, 1.0, 4.0, 75.0]))
    folds = [make_fold(rng, n=int(rng.integers(15, 50)), q=q, d=d, index=k) for k in range(2)]
    expected = dense_regdml_estimate(folds, gamma, assembly)
    assert np.allclose(regdml_estimate(folds, gamma, assembly), expected, rtol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_variance_matches_dense_transcription(seed):
    rng = np.random.default_rng(700 + seed)
    d = 1 + seed % 2
    q = d + int(rng.integers(0, 3))
    gamma = float(rng.choice([0.0, 3.0, 50.0]))
    folds = [make_fold(rng, n=int(rng.integers(15, 40)), q=q, d=d, index=k) for k in range(2)]
    b = regdml_estimate(folds, gamma)
    actual = regdml_variance(folds, gamma, b)
    assert np.allclose(actual, dense_regdml_variance(folds, gamma, b), rtol=1e-10, atol=1e-12)
    assert np.linalg.eigvalsh(actual).min() >= -1e-10


@pytest.mark.parametrize("N, expected", [(100, 2.302585), (4, 1.0), (7, 1.0), (1, 1.0)])
def test_a_multiplier(N, expected):
    assert a_multiplier(N) == pytest.approx(expected, abs=1e-6)


def test_a_multiplier_at_boundary():
    assert a_multiplier(math.exp(2.0)) == pytest.approx(1.0)


def test_grid_parse():
    grid = GammaGrid.parse("10, 0, 1, inf")
    assert grid.values == (0.0, 1.0, 10.0)
    assert grid.includes_infinity
    assert len(grid) == 4
    assert GammaGrid.parse(grid.to_text()) == grid
    assert not GammaGrid.parse("1,2").includes_infinity


def test_grid_default():
    grid = GammaGrid.default()
    assert grid.values[0] == 0.0
    assert len(grid.values) == 41
    assert grid.values[1] == pytest.approx(1e-3)
    assert grid.values[-1] == pytest.approx(1e5)
    assert GammaGrid.parse("default") == grid


@pytest.mark.parametrize("text", ["", "a,b", "-1"])
def test_grid_parse_invalid(text):
    with pytest.raises(InvalidArgumentError):
        GammaGrid.parse(text)


def test_argmin_tie_breaks_to_smallest_gamma():
    assert argmin_objective([(100.0, 0.10), (1.0, 0.30), (10.0, 0.10)]) == 10.0
    with pytest.raises(SelectionFailedError):
        argmin_objective([])


def test_select_gamma_single_candidate(folds):
    beta, sigma2 = dml_estimate(folds)
    selection = select_gamma(folds, GammaGrid(values=(5.0,), includes_infinity=False),
                             beta[0], sigma2[0, 0], 80)
    assert selection.gamma_hat == 5.0
    assert not selection.fallback


def test_select_gamma_evaluates_every_point(folds):
    beta, sigma2 = dml_estimate(folds)
    grid = GammaGrid.parse("0,1,10,inf")
    selection = select_gamma(folds, grid, beta[0], sigma2[0, 0], 80)
    assert [g for g, _ in selection.objective_values] == [0.0, 1.0, 10.0, math.inf]
    assert selection.objective_values[-1][1] == pytest.approx(sigma2[0, 0] / 80)
    best = min(value for _, value in selection.objective_values)
    assert dict(selection.objective_values)[selection.gamma_hat] == best


def test_select_gamma_without_bias_minimizes_variance(rng):
    # R_Y = 2 R_X + noise orthogonal to both R_A and R_X: b^gamma = 2 for every gamma
    RA = rng.normal(size=(40, 1))
    RX = RA + rng.normal(size=(40, 1))
    noise = rng.normal(size=40)
    noise -= np.column_stack([RA, RX]) @ np.linalg.lstsq(np.column_stack([RA, RX]), noise, rcond=None)[0]
    fold = ResidualFold(RA=RA, RX=RX, RY=2.0 * RX[:, 0] + noise)
    grid = GammaGrid(values=(1.0, 10.0, 100.0), includes_infinity=False)
    path = gamma_path([fold], grid, 2.0, 40)
    assert all(abs(p.beta - 2.0) < 1e-10 for p in path)
    expected = min(path, key=lambda p: p.sigma2).gamma
    assert select_gamma([fold], grid, 2.0, 1e6, 40).gamma_hat == expected


def test_gamma_path_skips_singular_points(rng):
    # R_X inside span(R_A): the gamma=0 system cancels to zero
    RA = rng.normal(size=(10, 1))
    fold = ResidualFold(RA=RA, RX=RA, RY=rng.normal(size=10))
    path = gamma_path([fold], GammaGrid(values=(0.0, 1.0), includes_infinity=False), 0.0, 10)
    assert [p.gamma for p in path] == [1.0]


def test_select_gamma_all_singular(rng):
    RA = rng.normal(size=(10, 1))
    fold = ResidualFold(RA=RA, RX=RA, RY=rng.normal(size=10))
    with pytest.raises(SelectionFailedError):
        select_gamma([fold], GammaGrid(values=(0.0,), includes_infinity=False), 0.0, 1.0, 10)


def test_gamma_path_rejects_multiple_regressors(rng):
    folds = [make_fold(rng, q=3, d=2)]
    with pytest.raises(InvalidArgumentError):
        gamma_path(folds, GammaGrid.default(), 0.0, 30)


def test_record_with_infinity_only_falls_back(folds):
    record = regularized_record(folds, GammaGrid(values=()), 80)
    assert record.fallback
    assert record.beta_reg == record.beta_dml
    assert record.sigma2_reg == record.sigma2_dml
    assert math.isinf(record.gamma_prime)


def test_record_scales_gamma(folds):
    record = regularized_record(folds, GammaGrid(values=(2.0,), includes_infinity=False), 100)
    assert record.gamma_hat == 2.0
    assert record.gamma_prime == pytest.approx(2.0 * 2.302585, abs=1e-5)
    assert record.beta_reg == pytest.approx(regdml_estimate(folds, record.gamma_prime)[0])
    assert len(record.path) == 1


def test_single_split_is_deterministic():
    data = generate(ScenarioSpec("linear_gaussian_oracle"), 300, np.random.default_rng(2))
    grid = GammaGrid.parse("0,1,10,100,inf")
    first = regsdml_single_split(data, 2, RegressorSpec(), grid, np.random.default_rng(5))
    second = regsdml_single_split(data, 2, RegressorSpec(), grid, np.random.default_rng(5))
    assert first == second
    assert first.gamma_prime >= first.gamma_hat


def record(beta, sigma2, beta_reg, sigma2_reg, gamma_prime=1.0):
    return RepetitionRecord(beta_dml=beta, sigma2_dml=sigma2, beta_reg=beta_reg, sigma2_reg=sigma2_reg,
                            gamma_hat=gamma_prime, gamma_prime=gamma_prime)


def test_aggregate_repetitions():
    records = [record(0.0, 1.0, 1.0, 0.5, 1.0), record(1.0, 1.0, 2.0, 0.5, 2.0), record(2.0, 1.0, 3.0, 0.5, 3.0)]
    aggregated = aggregate_repetitions(records)
    assert aggregated.beta_med == 1.0
    assert aggregated.sigma2_med == 2.0
    assert aggregated.beta_reg_med == 2.0
    assert aggregated.sigma2_reg_med == 1.5
    assert aggregated.gamma_prime_med == 2.0


@pytest.mark.parametrize("sigma2_reg, chosen", [(0.5, True), (1.0, False), (2.0, False)])
def test_select_final(sigma2_reg, chosen):
    result = select_final(1.0, 1.0, 3.0, sigma2_reg, N=100, level=0.95, gamma_prime=4.0)
    assert result.method == Method.REGS_DML
    assert result.selected_regularized is chosen
    assert result.beta[0] == (3.0 if chosen else 1.0)
    assert result.sigma2[0, 0] == min(1.0, sigma2_reg)
    assert result.gamma == (4.0 if chosen else None)


def test_select_final_needs_finite_variances():
    with pytest.raises(InvalidArgumentError):
        select_final(1.0, math.inf, 1.0, 1.0, N=10, level=0.95)


def test_regdml_result_reports_median_gamma():
    records = [record(0.0, 1.0, 0.1, 0.4, 2.0), record(0.0, 1.0, 0.1, 0.4, 8.0), record(0.0, 1.0, 0.1, 0.4, 4.0)]
    result = regdml_result(records, 50, 0.95)
    assert result.method == Method.REG_DML
    assert result.gamma == 4.0


@pytest.mark.parametrize("seed", range(100))
def test_regsdml_variance_is_smaller_median(seed):
    rng = np.random.default_rng(900 + seed)
    K, S, n = int(rng.integers(2, 4)), int(rng.integers(1, 5)), int(rng.integers(20, 60))
    fold_sets = [[make_fold(rng, n=n, q=int(1 + seed % 3), index=k) for k in range(K)] for _ in range(S)]
    result = regsdml_from_fold_sets(fold_sets, GammaGrid.default(), K * n, 0.95)
    records = [regularized_record(folds, GammaGrid.default(), K * n) for folds in fold_sets]
    aggregated = aggregate_repetitions(records)
    assert result.sigma2[0, 0] == min(aggregated.sigma2_med, aggregated.sigma2_reg_med)
    assert result.sigma2[0, 0] <= aggregated.sigma2_med


@pytest.mark.parametrize("scenario, K, S", [
    ("intro_sem", 2, 3),
    ("linear_gaussian_oracle", 3, 2),
    ("strong_confounding", 2, 4),
])
def test_regsdml_variance_on_scenarios(scenario, K, S):
    rng = np.random.default_rng(31)
    data = generate(ScenarioSpec(scenario), 120, rng)
    fold_sets = crossfit_repetitions(data, K, S, RegressorSpec(), rng)
    result = regsdml_from_fold_sets(fold_sets, GammaGrid.default(), data.N, 0.95)
    records = [regularized_record(folds, GammaGrid.default(), data.N) for folds in fold_sets]
    aggregated = aggregate_repetitions(records)
    assert result.sigma2[0, 0] == min(aggregated.sigma2_med, aggregated.sigma2_reg_med)
    assert result.method == Method.REGS_DML


def test_regsdml_median_stays_between_repetitions(rng):
    fold_sets = [[make_fold(rng, n=40, q=2, index=k) for k in range(2)] for _ in range(5)]
    records = [regularized_record(folds, GammaGrid.default(), 80) for folds in fold_sets]
    aggregated = aggregate_repetitions(records)
    assert min(r.beta_dml for r in records) <= aggregated.beta_med <= max(r.beta_dml for r in records)
