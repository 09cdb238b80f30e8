from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any
from typing import Union

import numpy as np
from scipy.stats import norm

from regsdml.data import EstimateResult
from regsdml.data import Method
from regsdml.data import ResidualFold
from regsdml.errors import InvalidArgumentError
from regsdml.linalg import fold_weights
from regsdml.linalg import guarded_inv
from regsdml.linalg import guarded_solve
from regsdml.linalg import project_onto
from regsdml.linalg import spectral_norm
from regsdml.linalg import symmetrize


logger = logging.getLogger(__name__)


class Assembly(Enum):
    DML1 = "DML1"
    DML2 = "DML2"

    @classmethod
    def _missing_(cls, value: object) -> Any:
        if isinstance(value, str):
            for member in cls:
                if member.value == value.strip().upper():
                    return member
        return None


@dataclass(frozen=True)
class FoldMoments:
    """Cross-moments of one fold's residuals, each scaled by 1/n_k."""
    fold: ResidualFold

    @property
    def n(self) -> int:
        return self.fold.n

    @property
    def index(self) -> int:
        return self.fold.fold_index

    @cached_property
    def SXA(self) -> np.ndarray:
        return self.fold.RX.T @ self.fold.RA / self.n

    @cached_property
    def SAA(self) -> np.ndarray:
        return symmetrize(self.fold.RA.T @ self.fold.RA / self.n)

    @property
    def SAX(self) -> np.ndarray:
        return self.SXA.T

    @cached_property
    def SXX(self) -> np.ndarray:
        return symmetrize(self.fold.RX.T @ self.fold.RX / self.n)

    @cached_property
    def SAY(self) -> np.ndarray:
        return self.fold.RA.T @ self.fold.RY / self.n

    @cached_property
    def SXY(self) -> np.ndarray:
        return self.fold.RX.T @ self.fold.RY / self.n

    @cached_property
    def PX(self) -> np.ndarray:
        return project_onto(self.fold.RA, self.fold.RX)

    @cached_property
    def PY(self) -> np.ndarray:
        return project_onto(self.fold.RA, self.fold.RY)

    @cached_property
    def XPX(self) -> np.ndarray:
        return symmetrize(self.PX.T @ self.fold.RX / self.n)

    @cached_property
    def XPY(self) -> np.ndarray:
        return self.PX.T @ self.fold.RY / self.n

    @cached_property
    def SAA_inv(self) -> np.ndarray:
        return guarded_inv(self.SAA, fold=self.index, what="instrument Gram matrix")

    def score(self, beta: np.ndarray) -> np.ndarray:
        """psi_i = R_A,i (R_Y,i - R_X,i^T beta), one row per observation."""
        residual = self.fold.RY - self.fold.RX @ beta
        return self.fold.RA * residual[:, None]

    def tsls(self) -> np.ndarray:
        return guarded_solve(self.XPX, self.XPY, fold=self.index, scale=spectral_norm(self.SXX),
                             what="projected regressor matrix")

    def jacobian(self) -> np.ndarray:
        """J_k0 = (SXA SAA^-1 SAX)^-1 SXA SAA^-1."""
        D3 = self.SXA @ self.SAA_inv
        return guarded_solve(D3 @ self.SAX, D3, fold=self.index, scale=spectral_norm(self.SXX),
                             what="projected regressor matrix")


FoldLike = Union[ResidualFold, FoldMoments]


def as_moments(folds: Sequence[FoldLike]) -> list[FoldMoments]:
    if len(folds) == 0:
        raise InvalidArgumentError("at least one residual fold is required")
    moments = [f if isinstance(f, FoldMoments) else FoldMoments(f) for f in folds]
    dims = {(m.fold.q, m.fold.d) for m in moments}
    if len(dims) != 1:
        raise InvalidArgumentError("all folds must share the same instrument and regressor dimensions")
    q, d = dims.pop()
    if q < d:
        raise InvalidArgumentError(f"need q >= d, got q={q}, d={d}")
    for m in moments:
        if m.n < q:
            raise InvalidArgumentError(f"fold {m.index + 1} has {m.n} rows, fewer than q={q}")
    return moments


def weighted_average(moments: Sequence[FoldMoments], values: Sequence[np.ndarray]) -> np.ndarray:
    weights = fold_weights([m.n for m in moments])
    return sum(w * np.asarray(value) for w, value in zip(weights, values))


def dml2_estimate(folds: Sequence[FoldLike]) -> np.ndarray:
    moments = as_moments(folds)
    XPX = weighted_average(moments, [m.XPX for m in moments])
    XPY = weighted_average(moments, [m.XPY for m in moments])
    SXX = weighted_average(moments, [m.SXX for m in moments])
    return guarded_solve(XPX, XPY, scale=spectral_norm(SXX), what="averaged projected regressor matrix")


def dml1_estimate(folds: Sequence[FoldLike]) -> np.ndarray:
    moments = as_moments(folds)
    return weighted_average(moments, [m.tsls() for m in moments])


def dml_variance(folds: Sequence[FoldLike], beta_hat: np.ndarray) -> np.ndarray:
    """Sandwich estimate of the asymptotic variance of sqrt(N) (beta_hat - beta_0)."""
    moments = as_moments(folds)
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))

    J0 = weighted_average(moments, [m.jacobian() for m in moments])
    scores = [m.score(beta_hat) for m in moments]
    omega = weighted_average(moments, [s.T @ s / m.n for m, s in zip(moments, scores)])
    return symmetrize(J0 @ omega @ J0.T)


def dml_estimate(folds: Sequence[FoldLike], assembly: Assembly = Assembly.DML2) -> tuple[np.ndarray, np.ndarray]:
    moments = as_moments(folds)
    if Assembly(assembly) == Assembly.DML1:
        beta = dml1_estimate(moments)
    else:
        beta = dml2_estimate(moments)
    return beta, dml_variance(moments, beta)


def normal_quantile(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError(f"level must lie in (0, 1), got {level}")
    return float(norm.ppf((1.0 + level) / 2.0))


def confidence_interval(beta: np.ndarray, sigma2: np.ndarray, N: int,
                        level: float) -> tuple[np.ndarray, np.ndarray]:
    z = normal_quantile(level)
    if N < 1:
        raise InvalidArgumentError(f"N must be positive, got {N}")
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=float))
    half = z * np.sqrt(np.clip(np.diag(sigma2), 0.0, None) / N)
    return beta - half, beta + half


def median_aggregate(betas: Sequence[np.ndarray],
                     sigma2s: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Median over repetitions with the split-variability correction.

    beta_med = median_s beta_s and
    sigma2_med = median_s (sigma2_s + (beta_s - beta_med)(beta_s - beta_med)^T),
    taken elementwise. Even counts average the two central values.
    """
    if len(betas) == 0 or len(betas) != len(sigma2s):
        raise InvalidArgumentError("need one variance per estimate and at least one repetition")
    betas = np.array([np.atleast_1d(b) for b in betas], dtype=float)
    sigma2s = np.array([np.atleast_2d(s) for s in sigma2s], dtype=float)

    beta_med = np.median(betas, axis=0)
    deviations = betas - beta_med
    corrected = sigma2s + deviations[:, :, None] * deviations[:, None, :]
    sigma2_med = symmetrize(np.median(corrected, axis=0))

    if sigma2_med.shape[0] > 1:
        eigenvalues, eigenvectors = np.linalg.eigh(sigma2_med)
        if eigenvalues.min() < 0.0:
            sigma2_med = symmetrize(eigenvectors @ np.diag(np.clip(eigenvalues, 0.0, None)) @ eigenvectors.T)
    return beta_med, sigma2_med


def estimate_result(beta: np.ndarray, sigma2: np.ndarray, N: int, level: float, method: Method,
                    gamma: float | None = None, **kwargs: Any) -> EstimateResult:
    lower, upper = confidence_interval(beta, sigma2, N, level)
    return EstimateResult(beta=beta, sigma2=sigma2, ci_lower=lower, ci_upper=upper,
                          method=method, n_obs=N, gamma=gamma, **kwargs)


def dml_from_fold_sets(fold_sets: Sequence[Sequence[FoldLike]], N: int, level: float,
                       assembly: Assembly = Assembly.DML2) -> EstimateResult:
    """DML over S sample splits, aggregated by the corrected median."""
    estimates = [dml_estimate(folds, assembly) for folds in fold_sets]
    beta, sigma2 = median_aggregate([e[0] for e in estimates], [e[1] for e in estimates])
    method = Method.DML1 if Assembly(assembly) == Assembly.DML1 else Method.DML
    return estimate_result(beta, sigma2, N, level, method)
