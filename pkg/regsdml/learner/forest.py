from __future__ import annotations

import logging

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from regsdml.learner.learner import FittedRegressor
from regsdml.learner.learner import Regressor
from regsdml.parallel import map_ordered


logger = logging.getLogger(__name__)

SEED_BOUND = 2**31 - 1


class FittedForest(FittedRegressor):

    def __init__(self, trees: list[list[DecisionTreeRegressor]], input_dim: int) -> None:
        super().__init__(input_dim, len(trees))
        self.__trees = trees

    @property
    def n_trees(self) -> int:
        return len(self.__trees[0])

    def tree_predictions(self, W_new: np.ndarray, column: int = 0) -> np.ndarray:
        """Per-tree predictions for one target column, shape (n_trees, m')."""
        return np.stack([tree.predict(W_new) for tree in self.__trees[column]])

    def _predict(self, W_new: np.ndarray) -> np.ndarray:
        columns = [self.tree_predictions(W_new, j).mean(axis=0) for j in range(self.output_dim)]
        return np.column_stack(columns)


class RandomForestRegressor(Regressor):
    """Bagged regression trees.

    Every tree sees a bootstrap sample of size m, considers ``mtry`` candidate
    covariates per split and grows until leaves hold ``forest_min_node`` rows.
    Tree seeds are drawn up front so the result does not depend on threading.
    """

    def fit(self, W: np.ndarray, target: np.ndarray, rng: np.random.Generator,
            role: str | None = None) -> FittedForest:
        m, v = W.shape
        spec = self.spec
        mtry = spec.resolve_mtry(v)
        seeds = rng.integers(0, SEED_BOUND, size=(target.shape[1], spec.forest_trees))

        def grow(job: tuple[int, int]) -> DecisionTreeRegressor:
            column, seed = job
            rows = np.random.default_rng(seed).integers(0, m, size=m)
            tree = DecisionTreeRegressor(
                min_samples_leaf=spec.forest_min_node, max_features=mtry, random_state=seed)
            return tree.fit(W[rows], target[rows, column])

        trees = []
        for column in range(target.shape[1]):
            jobs = [(column, int(seed)) for seed in seeds[column]]
            trees.append(map_ordered(grow, jobs, threads=spec.threads))

        logger.debug(f"Grew {spec.forest_trees} trees per target on {m} rows (mtry={mtry})")
        return FittedForest(trees, v)
