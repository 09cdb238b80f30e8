from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from regsdml import learner
from regsdml.data import Dataset
from regsdml.data import FoldPartition
from regsdml.data import partition_folds
from regsdml.data import ResidualFold
from regsdml.errors import InvalidArgumentError
from regsdml.learner import FittedRegressor
from regsdml.learner import LearnerKind
from regsdml.learner import RegressorSpec
from regsdml.linalg import project_onto
from regsdml.parallel import map_ordered

__all__ = [
    "NuisanceModels",
    "compute_residuals",
    "crossfit_once",
    "crossfit_repetitions",
    "fit_nuisance_models",
    "project_onto",
]

logger = logging.getLogger(__name__)


class NuisanceModels(NamedTuple):
    m_A: FittedRegressor
    m_X: FittedRegressor
    m_Y: FittedRegressor


def _check_training_size(spec: RegressorSpec, n_train: int, fold: int) -> None:
    needed = spec.min_train_size()
    if spec.kind == LearnerKind.SPLINE:
        needed = max(needed, spec.resolve_df(n_train))
    if n_train < needed:
        raise InvalidArgumentError(
            f"complement of fold {fold + 1} has {n_train} rows, the learner needs at least {needed}")


def fit_nuisance_models(W: np.ndarray, A: np.ndarray, X: np.ndarray, Y: np.ndarray,
                        train_idx: np.ndarray, spec: RegressorSpec,
                        rng: np.random.Generator) -> NuisanceModels:
    """Fit m_A, m_X and m_Y reading only the rows in ``train_idx``."""
    rng_a, rng_x, rng_y = rng.spawn(3)
    W_train = W[train_idx]
    return NuisanceModels(
        m_A=learner.fit(spec, W_train, A[train_idx], rng_a, role="A"),
        m_X=learner.fit(spec, W_train, X[train_idx], rng_x, role="X"),
        m_Y=learner.fit(spec, W_train, Y[train_idx], rng_y, role="Y"),
    )


def compute_residuals(data: Dataset, partition: FoldPartition, spec: RegressorSpec,
                      rng: np.random.Generator, threads: int = 1) -> list[ResidualFold]:
    if partition.N != data.N:
        raise InvalidArgumentError(f"partition covers {partition.N} rows, dataset has {data.N}")

    for k in range(partition.K):
        _check_training_size(spec, partition.complement(k).size, k)

    fold_rngs = rng.spawn(partition.K)

    def residualize(k: int) -> ResidualFold:
        rows = partition.folds[k]
        models = fit_nuisance_models(
            data.W, data.A, data.X, data.Y, partition.complement(k), spec, fold_rngs[k])
        held_out = data.subset(rows)
        return ResidualFold(
            RA=held_out.A - models.m_A.predict(held_out.W),
            RX=held_out.X - models.m_X.predict(held_out.W),
            RY=held_out.Y - models.m_Y.predict(held_out.W)[:, 0],
            fold_index=k,
            indices=rows,
        )

    folds = map_ordered(residualize, range(partition.K), threads=threads)
    logger.debug(f"Cross-fitted {spec.kind.value} nuisances on {partition.K} folds")
    return folds


def crossfit_once(data: Dataset, K: int, spec: RegressorSpec, rng: np.random.Generator,
                  threads: int = 1) -> list[ResidualFold]:
    """Draw one random K-fold partition and cross-fit residuals on it."""
    if data.N < 2 * K:
        raise InvalidArgumentError(f"N={data.N} is too small for K={K} folds (need N >= 2K)")
    split_rng, fit_rng = rng.spawn(2)
    partition = partition_folds(data.N, K, split_rng)
    return compute_residuals(data, partition, spec, fit_rng, threads=threads)


def crossfit_repetitions(data: Dataset, K: int, S: int, spec: RegressorSpec,
                         rng: np.random.Generator, threads: int = 1) -> list[list[ResidualFold]]:
    """Residual folds for S independent sample splits."""
    if S < 1:
        raise InvalidArgumentError(f"S must be at least 1, got {S}")

    repetition_rngs = rng.spawn(S)
    fold_sets = map_ordered(
        lambda s: crossfit_once(data, K, spec, repetition_rngs[s]), range(S), threads=threads)
    logger.info(f"Cross-fitting finished for {S} repetitions with K={K}")
    return fold_sets
