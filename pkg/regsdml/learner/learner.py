from __future__ import annotations

import abc
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from regsdml.constants import FOREST_MIN_NODE
from regsdml.constants import FOREST_TREES
from regsdml.constants import SPLINE_MIN_DF
from regsdml.errors import InvalidArgumentError


logger = logging.getLogger(__name__)

# (role, W) -> conditional means of that role given W, one column per coordinate
OracleMeans = Callable[[str, np.ndarray], np.ndarray]


class LearnerKind(Enum):
    SPLINE = "spline"
    FOREST = "forest"
    ORACLE = "oracle"

    @classmethod
    def _missing_(cls, value: object) -> Any:
        aliases = {
            "splineadditive": cls.SPLINE,
            "splines": cls.SPLINE,
            "randomforest": cls.FOREST,
            "rf": cls.FOREST,
        }
        if isinstance(value, str):
            text = value.strip().lower()
            for member in cls:
                if member.value == text:
                    return member
            return aliases.get(text.replace("_", ""))
        return None


def spline_df(n_train: int) -> int:
    if n_train < 1:
        raise InvalidArgumentError(f"spline_df needs at least one training row, got {n_train}")
    # integer powers such as 32 ** 0.2 must not round up
    root = n_train ** 0.2
    nearest = round(root)
    if nearest ** 5 == n_train:
        root = nearest
    return math.ceil(root) + 2


@dataclass(frozen=True)
class RegressorSpec:
    kind: LearnerKind = LearnerKind.SPLINE
    forest_trees: int = FOREST_TREES
    forest_min_node: int = FOREST_MIN_NODE
    forest_mtry: int | str = "auto"
    spline_df: int | str = "auto"
    oracle: OracleMeans | None = None
    threads: int = 1

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", LearnerKind(self.kind))
        except ValueError:
            raise InvalidArgumentError(f"unknown learner kind '{self.kind}'") from None
        if self.forest_trees < 1:
            raise InvalidArgumentError(f"forest_trees must be at least 1, got {self.forest_trees}")
        if self.forest_min_node < 1:
            raise InvalidArgumentError(f"forest_min_node must be at least 1, got {self.forest_min_node}")
        if self.forest_mtry != "auto" and (not isinstance(self.forest_mtry, int) or self.forest_mtry < 1):
            raise InvalidArgumentError(f"forest_mtry must be 'auto' or a positive integer, got {self.forest_mtry}")
        if self.spline_df != "auto" and (not isinstance(self.spline_df, int) or self.spline_df < SPLINE_MIN_DF):
            raise InvalidArgumentError(f"spline_df must be 'auto' or an integer >= {SPLINE_MIN_DF}")
        if self.threads < 1:
            raise InvalidArgumentError(f"threads must be at least 1, got {self.threads}")
        if self.kind == LearnerKind.ORACLE and self.oracle is None:
            raise InvalidArgumentError("the oracle learner needs the scenario's conditional means")

    def resolve_df(self, n_train: int) -> int:
        return spline_df(n_train) if self.spline_df == "auto" else int(self.spline_df)

    def resolve_mtry(self, v: int) -> int:
        if self.forest_mtry == "auto":
            return max(1, v // 3)
        return min(int(self.forest_mtry), v)

    def min_train_size(self) -> int:
        if self.kind == LearnerKind.SPLINE and self.spline_df != "auto":
            return max(2, int(self.spline_df))
        return 2


class FittedRegressor(abc.ABC):

    def __init__(self, input_dim: int, output_dim: int) -> None:
        self.__input_dim = input_dim
        self.__output_dim = output_dim

    @property
    def input_dim(self) -> int:
        return self.__input_dim

    @property
    def output_dim(self) -> int:
        return self.__output_dim

    def predict(self, W_new: np.ndarray) -> np.ndarray:
        W_new = np.asarray(W_new, dtype=float)
        if W_new.ndim == 1:
            W_new = W_new[:, None]
        if W_new.shape[1] != self.input_dim:
            raise InvalidArgumentError(
                f"model was fitted on {self.input_dim} covariates, got {W_new.shape[1]}")
        prediction = self._predict(W_new)
        return prediction.reshape(W_new.shape[0], self.output_dim)

    @abc.abstractmethod
    def _predict(self, W_new: np.ndarray) -> np.ndarray:
        pass


class Regressor(abc.ABC):

    def __init__(self, spec: RegressorSpec) -> None:
        self.__spec = spec

    @property
    def spec(self) -> RegressorSpec:
        return self.__spec

    @abc.abstractmethod
    def fit(self, W: np.ndarray, target: np.ndarray, rng: np.random.Generator,
            role: str | None = None) -> FittedRegressor:
        pass
