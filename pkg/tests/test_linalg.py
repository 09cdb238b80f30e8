from __future__ import annotations

from unittest.mock import patch

import numpy as np
import pytest

from regsdml.errors import InvalidArgumentError
from regsdml.errors import SingularSystemError
from regsdml.linalg import condition_number
from regsdml.linalg import fold_weights
from regsdml.linalg import guarded_inv
from regsdml.linalg import guarded_solve
from regsdml.linalg import project_onto


def test_project_onto_ones_gives_means(rng):
    V = rng.normal(size=(7, 2))
    projected = project_onto(np.ones(7), V)
    assert np.allclose(projected, np.tile(V.mean(axis=0), (7, 1)))


def test_project_onto_span_is_identity(rng):
    RA = rng.normal(size=(9, 3))
    V = RA @ rng.normal(size=(3, 2))
    assert np.allclose(project_onto(RA, V), V, atol=1e-10)


def test_project_onto_matches_dense_formula(rng):
    RA = rng.normal(size=(8, 2))
    V = rng.normal(size=8)
    dense = RA @ np.linalg.solve(RA.T @ RA, RA.T @ V)
    projected = project_onto(RA, V)
    assert projected.shape == (8,)
    assert np.allclose(projected, dense, atol=1e-10)


def test_project_onto_idempotent_and_orthogonal(rng):
    RA = rng.normal(size=(20, 3))
    V = rng.normal(size=(20, 2))
    once = project_onto(RA, V)
    assert np.allclose(project_onto(RA, once), once, atol=1e-10)
    inner = np.abs((V - once).T @ once)
    assert np.all(inner <= 1e-8 * (1.0 + np.linalg.norm(V) ** 2))


def test_project_onto_rank_deficient(rng):
    column = rng.normal(size=(10, 1))
    RA = np.hstack([column, 2.0 * column])
    V = rng.normal(size=10)
    assert np.allclose(project_onto(RA, V), project_onto(column, V), atol=1e-10)


def test_project_onto_zero_instrument():
    assert np.array_equal(project_onto(np.zeros((4, 1)), np.ones(4)), np.zeros(4))


@pytest.mark.parametrize("RA, V", [
    (np.ones((2, 3)), np.ones(2)),
    (np.ones((4, 1)), np.ones(3)),
    (np.array([[1.0], [np.nan]]), np.ones(2)),
])
def test_project_onto_invalid(RA, V):
    with pytest.raises(InvalidArgumentError):
        project_onto(RA, V)


def test_guarded_solve_singular():
    with pytest.raises(SingularSystemError) as e:
        guarded_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2), fold=1)
    assert "fold 2" in str(e.value)


def test_guarded_inv():
    assert np.allclose(guarded_inv(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    with pytest.raises(SingularSystemError):
        guarded_inv(np.diag([1.0, 1e-14]))


def test_condition_number_of_non_finite():
    assert condition_number(np.array([[np.inf]])) == float("inf")


def test_fold_weights_by_size():
    assert np.allclose(fold_weights([2, 3, 5]), [0.2, 0.3, 0.5])


@patch("regsdml.settings.REGSDML_FOLD_WEIGHTING", "uniform")
def test_fold_weights_uniform():
    assert np.allclose(fold_weights([2, 3, 5]), [1 / 3, 1 / 3, 1 / 3])


@patch("regsdml.settings.REGSDML_FOLD_WEIGHTING", "median")
def test_fold_weights_unknown_mode():
    with pytest.raises(InvalidArgumentError):
        fold_weights([1, 1])
