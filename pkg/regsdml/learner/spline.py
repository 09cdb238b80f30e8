from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.interpolate import BSpline

from regsdml import settings
from regsdml.constants import SPLINE_DEGREE
from regsdml.constants import SPLINE_RIDGE_JITTER
from regsdml.errors import InvalidArgumentError
from regsdml.learner.learner import FittedRegressor
from regsdml.learner.learner import Regressor
from regsdml.linalg import condition_number


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoordinateBasis:
    column: int
    lower: float
    upper: float
    knots: np.ndarray

    @property
    def n_columns(self) -> int:
        # first B-spline is dropped, the intercept spans it
        return len(self.knots) - SPLINE_DEGREE - 2

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        clamped = np.clip(x, self.lower, self.upper)
        basis = BSpline.design_matrix(clamped, self.knots, SPLINE_DEGREE).toarray()
        return basis[:, 1:]


def quantile_knots(x: np.ndarray, df: int) -> np.ndarray:
    lower, upper = float(np.min(x)), float(np.max(x))
    n_interior = max(df - SPLINE_DEGREE, 0)
    interior = np.quantile(x, np.linspace(0.0, 1.0, n_interior + 2)[1:-1])
    interior = np.unique(interior)
    interior = interior[(interior > lower) & (interior < upper)]
    return np.concatenate([
        np.repeat(lower, SPLINE_DEGREE + 1), interior, np.repeat(upper, SPLINE_DEGREE + 1)])


def additive_design(bases: list[CoordinateBasis], W: np.ndarray) -> np.ndarray:
    blocks = [np.ones((W.shape[0], 1))]
    blocks.extend(basis.evaluate(W[:, basis.column]) for basis in bases)
    return np.hstack(blocks)


class FittedSpline(FittedRegressor):

    def __init__(self, bases: list[CoordinateBasis], coefficients: np.ndarray, input_dim: int) -> None:
        super().__init__(input_dim, coefficients.shape[1])
        self.__bases = bases
        self.__coefficients = coefficients

    @property
    def bases(self) -> list[CoordinateBasis]:
        return self.__bases

    @property
    def coefficients(self) -> np.ndarray:
        return self.__coefficients

    def design(self, W: np.ndarray) -> np.ndarray:
        return additive_design(self.bases, W)

    def _predict(self, W_new: np.ndarray) -> np.ndarray:
        return self.design(W_new) @ self.coefficients


class SplineAdditiveRegressor(Regressor):
    """Additive cubic B-spline regression fitted by least squares.

    Each covariate gets its own clamped cubic basis with knots at equally
    spaced quantiles; the design is the column-wise union of these bases plus
    an intercept. Constant covariates contribute no columns.
    """

    def fit(self, W: np.ndarray, target: np.ndarray, rng: np.random.Generator,
            role: str | None = None) -> FittedSpline:
        m, v = W.shape
        df = self.spec.resolve_df(m)
        if m < df:
            raise InvalidArgumentError(f"spline with {df} degrees of freedom needs at least {df} rows, got {m}")

        bases = []
        for j in range(v):
            x = W[:, j]
            if np.ptp(x) == 0.0:
                continue
            knots = quantile_knots(x, df)
            bases.append(CoordinateBasis(column=j, lower=float(knots[0]), upper=float(knots[-1]), knots=knots))

        design = additive_design(bases, W)
        gram = design.T @ design
        moment = design.T @ target

        if condition_number(gram) > settings.REGSDML_CONDITION_LIMIT:
            jitter = SPLINE_RIDGE_JITTER * float(np.mean(np.diag(gram)))
            logger.debug(f"Spline design is rank deficient, adding ridge jitter {jitter:.3e}")
            gram = gram + jitter * np.eye(gram.shape[0])

        coefficients = scipy.linalg.solve(gram, moment, assume_a="pos")
        return FittedSpline(bases, coefficients, v)
