from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import make_fold
from regsdml.diagnostics import naive_instrument_diagnostic
from regsdml.diagnostics import naive_instrument_folds
from regsdml.diagnostics import orthogonality_diagnostic
from regsdml.diagnostics import OrthogonalityDiagnostic
from regsdml.diagnostics import Score
from regsdml.errors import InvalidArgumentError
from regsdml.learner import LearnerKind
from regsdml.learner import RegressorSpec
from regsdml.sem.scenarios import ScenarioSpec


@pytest.fixture
def scenario():
    return ScenarioSpec("linear_gaussian_oracle")


def test_neyman_score_is_orthogonal(scenario):
    result = orthogonality_diagnostic(Score.NEYMAN_PSI, scenario, 100000, 0.01, np.random.default_rng(1))
    assert abs(result.derivative) <= 3.0 * result.std_error


def test_naive_score_is_not_orthogonal(scenario):
    result = orthogonality_diagnostic("naive_varphi", scenario, 100000, 0.01, np.random.default_rng(1))
    assert result.z_score > 5.0
    # d/dr of A (R_Y - beta0 R_X) along (1, 1, 0) is beta0 E[A] = 1
    assert result.derivative == pytest.approx(1.0, abs=0.05)


def test_score_aliases():
    assert Score("psi") == Score.NEYMAN_PSI
    assert Score("naive") == Score.NAIVE_VARPHI
    with pytest.raises(ValueError):
        Score("chi")


@pytest.mark.parametrize("mc_size, step", [(999, 0.01), (5000, 0.0), (5000, 0.2)])
def test_orthogonality_argument_checks(scenario, mc_size, step):
    with pytest.raises(InvalidArgumentError):
        orthogonality_diagnostic(Score.NEYMAN_PSI, scenario, mc_size, step, np.random.default_rng(0))


def test_orthogonality_needs_closed_form_means():
    with pytest.raises(InvalidArgumentError):
        orthogonality_diagnostic(Score.NEYMAN_PSI, ScenarioSpec("hw_noise"), 1000, 0.01, np.random.default_rng(0))


def test_z_score_with_zero_error():
    assert OrthogonalityDiagnostic(derivative=0.0, std_error=0.0).z_score == math.inf


def test_naive_instrument_folds_replace_instrument(rng):
    fold = make_fold(rng, n=5, q=1)
    fold = type(fold)(RA=fold.RA, RX=fold.RX, RY=fold.RY, fold_index=0, indices=np.arange(5))
    A = np.arange(10.0)[:, None]
    naive = naive_instrument_folds([fold], A)[0]
    assert np.array_equal(naive.RA, A[:5])
    assert np.array_equal(naive.RY, fold.RY)


def test_naive_instrument_single_run_is_finite():
    learner = RegressorSpec(kind=LearnerKind.FOREST, forest_trees=20)
    result = naive_instrument_diagnostic(N=200, M=1, K=2, rng=np.random.default_rng(0), learner=learner)
    assert np.isfinite(result.naive)
    assert np.isfinite(result.proper)


def test_naive_instrument_with_zero_effect():
    learner = RegressorSpec(kind=LearnerKind.FOREST, forest_trees=20)
    result = naive_instrument_diagnostic(N=200, M=2, K=2, rng=np.random.default_rng(3), learner=learner, beta0=0.0)
    assert np.isfinite(result.naive)
    assert np.isfinite(result.proper)


def test_naive_instrument_needs_runs():
    with pytest.raises(InvalidArgumentError):
        naive_instrument_diagnostic(N=200, M=0, K=2, rng=np.random.default_rng(0))


@pytest.mark.slow
def test_naive_instrument_is_biased():
    result = naive_instrument_diagnostic(N=500, M=200, K=2, rng=np.random.default_rng(11), threads=4)
    assert abs(result.proper) <= 0.3
    assert abs(result.naive) >= 3.0 * abs(result.proper)
