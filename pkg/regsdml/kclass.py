from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from regsdml.constants import KAPPA_CLAMP
from regsdml.crossfit import crossfit_repetitions
from regsdml.data import Dataset
from regsdml.data import EstimateResult
from regsdml.data import Method
from regsdml.data import ResidualFold
from regsdml.errors import InvalidArgumentError
from regsdml.estimators import as_moments
from regsdml.estimators import Assembly
from regsdml.estimators import estimate_result
from regsdml.estimators import FoldLike
from regsdml.estimators import FoldMoments
from regsdml.estimators import median_aggregate
from regsdml.learner import RegressorSpec
from regsdml.linalg import check_condition
from regsdml.linalg import fold_weights
from regsdml.linalg import guarded_solve
from regsdml.linalg import project_onto
from regsdml.linalg import spectral_norm
from regsdml.linalg import symmetrize
from regsdml.regularized import regdml_estimate
from regsdml.regularized import regdml_variance


logger = logging.getLogger(__name__)

FULLER_ALPHA = {
    Method.LIML: 0.0,
    Method.FULLER1: 1.0,
    Method.FULLER4: 4.0,
}


@dataclass(frozen=True)
class KappaResult:
    kappa_per_fold: tuple[float, ...]
    kappa_avg: float
    gamma: float
    method: Method


def _fold_of(fold: FoldLike) -> ResidualFold:
    return fold.fold if isinstance(fold, FoldMoments) else fold


def liml_kappa(fold: FoldLike) -> float:
    """Smallest eigenvalue of (Z^T M Z)^-1 Z^T Z with Z = [R_Y | R_X], M = I - P_A."""
    fold = _fold_of(fold)
    if fold.n <= fold.q + fold.d:
        raise InvalidArgumentError(
            f"fold {fold.fold_index + 1} has {fold.n} rows, LIML needs more than q + d = {fold.q + fold.d}")

    Z = np.column_stack([fold.RY, fold.RX])
    total = symmetrize(Z.T @ Z)
    residual = symmetrize(total - Z.T @ project_onto(fold.RA, Z))
    check_condition(residual, fold=fold.fold_index, scale=spectral_norm(total),
                    what="LIML residual cross-product")
    eigenvalues = scipy.linalg.eigh(total, residual, eigvals_only=True)
    return float(eigenvalues[0])


def fuller_kappa(kappa_liml: float, alpha: float, n_k: int, q: int) -> float:
    if n_k <= q:
        raise InvalidArgumentError(f"Fuller adjustment needs n_k > q, got n_k={n_k}, q={q}")
    if alpha < 0:
        raise InvalidArgumentError(f"alpha must be non-negative, got {alpha}")
    return kappa_liml - alpha / (n_k - q)


def kclass_gamma(kappa: float) -> float:
    return 1.0 / (1.0 - min(kappa, 1.0 - KAPPA_CLAMP))


def kclass_closed_form(fold: FoldLike, kappa: float) -> np.ndarray:
    """(R_X^T (I - kappa M) R_X)^-1 R_X^T (I - kappa M) R_Y on a single fold."""
    m = fold if isinstance(fold, FoldMoments) else FoldMoments(fold)
    gram = m.SXX - kappa * (m.SXX - m.XPX)
    rhs = m.SXY - kappa * (m.SXY - m.XPY)
    scale = spectral_norm(m.SXX) + abs(kappa) * spectral_norm(m.SXX - m.XPX)
    return guarded_solve(gram, rhs, fold=m.index, scale=scale, what="k-class normal equations")


def kclass_kappa(folds: Sequence[FoldLike], method: Method) -> KappaResult:
    method = Method(method)
    if not method.is_kclass():
        raise InvalidArgumentError(f"{method.value} is not a k-class method")
    moments = as_moments(folds)
    alpha = FULLER_ALPHA[method]

    kappas = []
    for m in moments:
        kappa = liml_kappa(m)
        if alpha > 0:
            kappa = fuller_kappa(kappa, alpha, m.n, m.fold.q)
        kappas.append(kappa)

    weights = fold_weights([m.n for m in moments])
    kappa_avg = float(np.dot(weights, kappas))
    return KappaResult(kappa_per_fold=tuple(kappas), kappa_avg=kappa_avg,
                       gamma=kclass_gamma(kappa_avg), method=method)


def kclass_from_fold_sets(fold_sets: Sequence[Sequence[FoldLike]], method: Method, N: int,
                          level: float, assembly: Assembly = Assembly.DML2) -> EstimateResult:
    method = Method(method)
    betas, sigma2s, gammas = [], [], []
    for folds in fold_sets:
        moments = as_moments(folds)
        if moments[0].fold.d != 1:
            raise InvalidArgumentError("k-class estimators are only provided for a single regressor (d=1)")
        kappa = kclass_kappa(moments, method)
        b = regdml_estimate(moments, kappa.gamma, assembly)
        betas.append(b)
        sigma2s.append(regdml_variance(moments, kappa.gamma, b))
        gammas.append(kappa.gamma)

    beta, sigma2 = median_aggregate(betas, sigma2s)
    gamma = float(np.median(gammas))
    logger.debug(f"{method.value}: median gamma {gamma:g} over {len(gammas)} splits")
    return estimate_result(beta, sigma2, N, level, method, gamma=gamma)


def kclass_estimate(folds: Sequence[FoldLike] | None, method: Method, N: int, level: float, S: int = 1,
                    rng: np.random.Generator | None = None, data: Dataset | None = None, K: int = 2,
                    spec: RegressorSpec | None = None,
                    assembly: Assembly = Assembly.DML2) -> EstimateResult:
    """LIML or Fuller estimate run through the regularized machinery.

    With ``data`` given, S fresh sample splits are cross-fitted; otherwise
    ``folds`` is the single split and S must be 1.
    """
    if data is not None:
        if rng is None or spec is None:
            raise InvalidArgumentError("cross-fitting from data needs both rng and spec")
        fold_sets = crossfit_repetitions(data, K, S, spec, rng)
    else:
        if folds is None:
            raise InvalidArgumentError("either folds or data must be given")
        if S != 1:
            raise InvalidArgumentError("S > 1 needs data to draw further sample splits")
        fold_sets = [folds]
    return kclass_from_fold_sets(fold_sets, method, N, level, assembly)
