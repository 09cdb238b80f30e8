from __future__ import annotations

import numpy as np

from regsdml.errors import InvalidArgumentError
from regsdml.learner.forest import RandomForestRegressor
from regsdml.learner.learner import FittedRegressor
from regsdml.learner.learner import LearnerKind
from regsdml.learner.learner import Regressor
from regsdml.learner.learner import RegressorSpec
from regsdml.learner.learner import spline_df
from regsdml.learner.oracle import OracleRegressor
from regsdml.learner.spline import SplineAdditiveRegressor

__all__ = [
    "FittedRegressor",
    "LearnerKind",
    "Regressor",
    "RegressorSpec",
    "create_regressor",
    "fit",
    "predict",
    "spline_df",
]


class RegressorFactory:

    @staticmethod
    def create(spec: RegressorSpec) -> Regressor:
        if spec.kind == LearnerKind.SPLINE:
            return SplineAdditiveRegressor(spec)
        if spec.kind == LearnerKind.FOREST:
            return RandomForestRegressor(spec)
        if spec.kind == LearnerKind.ORACLE:
            return OracleRegressor(spec)
        raise InvalidArgumentError(f"no regressor for learner kind {spec.kind}")


def create_regressor(spec: RegressorSpec) -> Regressor:
    return RegressorFactory.create(spec)


def fit(spec: RegressorSpec, W: np.ndarray, target: np.ndarray, rng: np.random.Generator,
        *, role: str | None = None) -> FittedRegressor:
    W = np.asarray(W, dtype=float)
    target = np.asarray(target, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if target.ndim == 1:
        target = target[:, None]
    if W.shape[0] != target.shape[0]:
        raise InvalidArgumentError(f"W has {W.shape[0]} rows but the target has {target.shape[0]}")
    if W.shape[0] < 2:
        raise InvalidArgumentError(f"fitting needs at least 2 rows, got {W.shape[0]}")
    return create_regressor(spec).fit(W, target, rng, role=role)


def predict(model: FittedRegressor, W_new: np.ndarray) -> np.ndarray:
    return model.predict(W_new)
