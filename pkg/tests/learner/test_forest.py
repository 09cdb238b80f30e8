from __future__ import annotations

import numpy as np
import pytest

from regsdml import learner
from regsdml.learner import LearnerKind
from regsdml.learner import RegressorSpec


@pytest.fixture
def spec():
    return RegressorSpec(kind=LearnerKind.FOREST, forest_trees=50, forest_min_node=5)


def test_constant_target_is_exact(spec, rng):
    W = rng.normal(size=(40, 3))
    model = learner.fit(spec, W, np.full(40, 2.5), rng)
    assert np.all(model.predict(rng.normal(size=(10, 3))) == 2.5)


def test_same_seed_same_predictions(rng):
    spec = RegressorSpec(kind=LearnerKind.FOREST, forest_trees=500, forest_min_node=5)
    W = rng.normal(size=(60, 2))
    target = W[:, 0] + rng.normal(size=60)
    first = learner.fit(spec, W, target, np.random.default_rng(11)).predict(W)
    second = learner.fit(spec, W, target, np.random.default_rng(11)).predict(W)
    assert np.array_equal(first, second)


def test_threads_do_not_change_predictions(rng):
    W = rng.normal(size=(60, 2))
    target = W[:, 1] + rng.normal(size=60)
    serial = RegressorSpec(kind=LearnerKind.FOREST, forest_trees=30, threads=1)
    parallel = RegressorSpec(kind=LearnerKind.FOREST, forest_trees=30, threads=4)
    assert np.array_equal(learner.fit(serial, W, target, np.random.default_rng(5)).predict(W),
                          learner.fit(parallel, W, target, np.random.default_rng(5)).predict(W))


def test_mtry_auto():
    spec = RegressorSpec(kind=LearnerKind.FOREST)
    assert spec.resolve_mtry(1) == 1
    assert spec.resolve_mtry(20) == 6
    assert RegressorSpec(kind=LearnerKind.FOREST, forest_mtry=50).resolve_mtry(4) == 4


def test_tracks_step_function(spec, rng):
    W = rng.uniform(-1, 1, size=(400, 1))
    target = np.where(W[:, 0] > 0, 1.0, -1.0)
    model = learner.fit(spec, W, target, rng)
    prediction = model.predict(np.array([[-0.5], [0.5]]))[:, 0]
    assert prediction[0] < -0.8
    assert prediction[1] > 0.8


def test_permutation_changes_less_than_monte_carlo_spread(rng):
    spec = RegressorSpec(kind=LearnerKind.FOREST, forest_trees=100)
    W = rng.normal(size=(500, 2))
    target = np.sin(W[:, 0]) + rng.normal(size=500)
    order = rng.permutation(500)
    grid = rng.normal(size=(20, 2))
    first = learner.fit(spec, W, target, np.random.default_rng(1))
    second = learner.fit(spec, W[order], target[order], np.random.default_rng(1))
    spread = first.tree_predictions(grid).std(axis=0) / np.sqrt(first.n_trees)
    difference = np.abs(first.predict(grid) - second.predict(grid))[:, 0]
    assert np.all(difference <= 5.0 * np.sqrt(2.0) * spread + 1e-12)
