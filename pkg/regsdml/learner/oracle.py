from __future__ import annotations

import numpy as np

from regsdml.errors import InvalidArgumentError
from regsdml.learner.learner import FittedRegressor
from regsdml.learner.learner import OracleMeans
from regsdml.learner.learner import Regressor


class FittedOracle(FittedRegressor):

    def __init__(self, means: OracleMeans, role: str, input_dim: int, output_dim: int) -> None:
        super().__init__(input_dim, output_dim)
        self.__means = means
        self.__role = role

    @property
    def role(self) -> str:
        return self.__role

    def _predict(self, W_new: np.ndarray) -> np.ndarray:
        return np.asarray(self.__means(self.role, W_new), dtype=float)


class OracleRegressor(Regressor):
    """Ignores the training data and returns known conditional means."""

    def fit(self, W: np.ndarray, target: np.ndarray, rng: np.random.Generator,
            role: str | None = None) -> FittedOracle:
        if role is None:
            raise InvalidArgumentError("the oracle learner needs to know which variable it predicts")
        return FittedOracle(self.spec.oracle, role, W.shape[1], target.shape[1])
