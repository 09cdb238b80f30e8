from __future__ import annotations

import logging
import math
from collections.abc import Iterator
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from typing import NamedTuple

import numpy as np

from regsdml.constants import GAMMA_GRID_MAX
from regsdml.constants import GAMMA_GRID_MIN
from regsdml.constants import GAMMA_GRID_SIZE
from regsdml.crossfit import crossfit_once
from regsdml.data import Dataset
from regsdml.data import EstimateResult
from regsdml.data import Method
from regsdml.errors import InvalidArgumentError
from regsdml.errors import SelectionFailedError
from regsdml.errors import SingularSystemError
from regsdml.estimators import as_moments
from regsdml.estimators import Assembly
from regsdml.estimators import dml_estimate
from regsdml.estimators import estimate_result
from regsdml.estimators import FoldLike
from regsdml.estimators import FoldMoments
from regsdml.estimators import median_aggregate
from regsdml.estimators import weighted_average
from regsdml.learner import RegressorSpec
from regsdml.linalg import guarded_solve
from regsdml.linalg import spectral_norm
from regsdml.linalg import symmetrize
from regsdml.parallel import map_ordered


logger = logging.getLogger(__name__)

INFINITY_TOKENS = ("inf", "infinity", "∞")


@dataclass(frozen=True)
class GammaGrid:
    values: tuple[float, ...]
    # the infinity sentinel stands for plain DML
    includes_infinity: bool = True

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values and not self.includes_infinity:
            raise InvalidArgumentError("the gamma grid is empty")
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise InvalidArgumentError("grid values must be finite and non-negative")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InvalidArgumentError("grid values must be strictly increasing")
        object.__setattr__(self, "values", values)

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values) + int(self.includes_infinity)

    @staticmethod
    def default() -> GammaGrid:
        points = np.geomspace(GAMMA_GRID_MIN, GAMMA_GRID_MAX, GAMMA_GRID_SIZE)
        return GammaGrid(values=(0.0, *points.tolist()), includes_infinity=True)

    @staticmethod
    def parse(text: str) -> GammaGrid:
        """Parse ``default`` or a comma separated list such as ``0,1,10,inf``."""
        text = text.strip()
        if text.lower() == "default":
            return GammaGrid.default()

        values = []
        infinity = False
        for token in filter(None, (t.strip() for t in text.split(","))):
            if token.lower() in INFINITY_TOKENS:
                infinity = True
                continue
            try:
                values.append(float(token))
            except ValueError:
                raise InvalidArgumentError(f"invalid gamma grid value '{token}'") from None
        return GammaGrid(values=tuple(sorted(set(values))), includes_infinity=infinity)

    def to_text(self) -> str:
        tokens = [repr(v) for v in self.values]
        if self.includes_infinity:
            tokens.append("inf")
        return ",".join(tokens)


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not math.isfinite(gamma) or gamma < 0:
        raise InvalidArgumentError(f"gamma must be finite and non-negative, got {gamma}")
    return gamma


def _gram_scale(m: FoldMoments, gamma: float) -> float:
    # size of the system before the (gamma - 1) P terms can cancel
    return spectral_norm(m.SXX) + abs(gamma - 1.0) * spectral_norm(m.XPX)


def _solve_assembled(moments: list[FoldMoments], grams: list[np.ndarray], rhs: list[np.ndarray],
                     gamma: float, assembly: Assembly) -> np.ndarray:
    scales = [_gram_scale(m, gamma) for m in moments]
    if Assembly(assembly) == Assembly.DML1:
        per_fold = [
            guarded_solve(g, h, fold=m.index, scale=s, what="regularized normal equations")
            for m, g, h, s in zip(moments, grams, rhs, scales)]
        return weighted_average(moments, per_fold)
    return guarded_solve(weighted_average(moments, grams), weighted_average(moments, rhs),
                         scale=float(weighted_average(moments, scales)),
                         what="averaged regularized normal equations")


def regdml_estimate(folds: Sequence[FoldLike], gamma: float,
                    assembly: Assembly = Assembly.DML2) -> np.ndarray:
    """b^gamma from R_X^T (I + (gamma - 1) P) R_X b = R_X^T (I + (gamma - 1) P) R_Y."""
    gamma = _check_gamma(gamma)
    moments = as_moments(folds)
    grams = [m.SXX + (gamma - 1.0) * m.XPX for m in moments]
    rhs = [m.SXY + (gamma - 1.0) * m.XPY for m in moments]
    return _solve_assembled(moments, grams, rhs, gamma, assembly)


def transformed_residuals(moments: FoldMoments, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """R~ = (I + (sqrt(gamma) - 1) P) R for the regressor and response residuals."""
    shift = math.sqrt(_check_gamma(gamma)) - 1.0
    return moments.fold.RX + shift * moments.PX, moments.fold.RY + shift * moments.PY


def regdml_estimate_transformed(folds: Sequence[FoldLike], gamma: float,
                                assembly: Assembly = Assembly.DML2) -> np.ndarray:
    """b^gamma as pooled least squares on transformed residuals."""
    moments = as_moments(folds)
    grams, rhs = [], []
    for m in moments:
        RX, RY = transformed_residuals(m, gamma)
        grams.append(RX.T @ RX / m.n)
        rhs.append(RX.T @ RY / m.n)
    return _solve_assembled(moments, grams, rhs, _check_gamma(gamma), assembly)


def regdml_variance(folds: Sequence[FoldLike], gamma: float, b_gamma_hat: np.ndarray) -> np.ndarray:
    """Sandwich estimate of the asymptotic variance of sqrt(N) (b^gamma - b_gamma_0)."""
    gamma = _check_gamma(gamma)
    moments = as_moments(folds)
    b = np.atleast_1d(np.asarray(b_gamma_hat, dtype=float))
    g = gamma - 1.0

    D1s, D2s, D4s = [], [], []
    for m in moments:
        RA, RX = m.fold.RA, m.fold.RX
        residual = m.fold.RY - RX @ b
        psi = RA * residual[:, None]
        psi_tilde = RX * residual[:, None]

        D3 = m.SXA @ m.SAA_inv
        D5 = m.SAA_inv @ psi.mean(axis=0)
        u = RA @ D5

        # psi_1 = R_X R_A^T and psi_2 = R_A R_A^T, centered at their fold means
        psi1_D5 = RX * u[:, None] - m.SXA @ D5
        psi2_D5 = RA * u[:, None] - m.SAA @ D5
        psi_bar = psi_tilde + g * (psi @ D3.T + psi1_D5 - psi2_D5 @ D3.T)

        D1s.append(m.SXX)
        D2s.append(symmetrize(D3 @ m.SAX))
        D4s.append(psi_bar.T @ psi_bar / m.n)

    D1 = weighted_average(moments, D1s)
    D2 = weighted_average(moments, D2s)
    D4 = weighted_average(moments, D4s)
    bread = D1 + g * D2
    scale = spectral_norm(D1) + abs(g) * spectral_norm(D2)
    left = guarded_solve(bread, D4, scale=scale, what="regularized variance bread")
    return symmetrize(guarded_solve(bread, left.T, scale=scale, what="regularized variance bread"))


def a_multiplier(N: int) -> float:
    if N < 1:
        raise InvalidArgumentError(f"N must be positive, got {N}")
    return max(1.0, math.log(math.sqrt(N)))


@dataclass(frozen=True)
class GammaPathPoint:
    gamma: float
    beta: float
    sigma2: float
    variance: float
    bias2: float

    @property
    def objective(self) -> float:
        return self.variance + self.bias2


def gamma_path(folds: Sequence[FoldLike], grid: GammaGrid, beta_dml: float, N: int,
               assembly: Assembly = Assembly.DML2) -> list[GammaPathPoint]:
    """Estimated variance, squared bias and their sum for each finite grid value.

    Grid points whose systems are singular are skipped.
    """
    moments = as_moments(folds)
    if moments[0].fold.d != 1:
        raise InvalidArgumentError("gamma selection is only defined for a single regressor (d=1)")

    path = []
    for gamma in grid:
        try:
            b = regdml_estimate(moments, gamma, assembly)
            sigma2 = regdml_variance(moments, gamma, b)
        except SingularSystemError as e:
            logger.warning(f"Skipping gamma={gamma:g}: {e}")
            continue
        beta = float(b[0])
        s2 = float(sigma2[0, 0])
        path.append(GammaPathPoint(gamma=gamma, beta=beta, sigma2=s2, variance=s2 / N,
                                   bias2=(beta - float(beta_dml)) ** 2))
    return path


class GammaSelection(NamedTuple):
    gamma_hat: float
    objective_values: list[tuple[float, float]]
    fallback: bool


def argmin_objective(objective_values: Sequence[tuple[float, float]]) -> float:
    """Smallest gamma attaining the minimal objective."""
    if not objective_values:
        raise SelectionFailedError("no gamma grid value could be evaluated")
    best_gamma, best_value = None, math.inf
    for gamma, value in sorted(objective_values, key=lambda item: item[0]):
        if best_gamma is None or value < best_value:
            best_gamma, best_value = gamma, value
    return best_gamma


def _select_on_path(path: Sequence[GammaPathPoint], grid: GammaGrid, sigma2_dml: float,
                    N: int) -> GammaSelection:
    objective_values = [(p.gamma, p.objective) for p in path]
    if grid.includes_infinity:
        objective_values.append((math.inf, float(sigma2_dml) / N))
    if not objective_values:
        raise SelectionFailedError(f"all {len(grid)} gamma grid evaluations were singular")

    gamma_hat = argmin_objective(objective_values)
    return GammaSelection(gamma_hat=gamma_hat, objective_values=objective_values,
                          fallback=math.isinf(gamma_hat))


def select_gamma(folds: Sequence[FoldLike], grid: GammaGrid, beta_dml: float, sigma2_dml: float,
                 N: int, assembly: Assembly = Assembly.DML2) -> GammaSelection:
    """Minimize sigma2(gamma) / N + (b^gamma - beta_dml)^2 over the grid.

    The infinity sentinel scores sigma2_dml / N; selecting it means plain DML.
    """
    return _select_on_path(gamma_path(folds, grid, beta_dml, N, assembly), grid, sigma2_dml, N)


@dataclass(frozen=True)
class RepetitionRecord:
    beta_dml: float
    sigma2_dml: float
    beta_reg: float
    sigma2_reg: float
    gamma_hat: float
    gamma_prime: float
    fallback: bool = False
    seed: tuple[int, ...] = ()
    path: tuple[GammaPathPoint, ...] = field(default=(), compare=False, repr=False)


def regularized_record(folds: Sequence[FoldLike], grid: GammaGrid, N: int,
                       assembly: Assembly = Assembly.DML2,
                       seed: tuple[int, ...] = ()) -> RepetitionRecord:
    """One pass of the selection loop on a fixed sample split."""
    moments = as_moments(folds)
    if moments[0].fold.d != 1:
        raise InvalidArgumentError("regsDML is only defined for a single regressor (d=1)")

    beta, sigma2 = dml_estimate(moments, assembly)
    beta_dml, sigma2_dml = float(beta[0]), float(sigma2[0, 0])

    path = gamma_path(moments, grid, beta_dml, N, assembly)
    gamma_hat = _select_on_path(path, grid, sigma2_dml, N).gamma_hat

    if math.isinf(gamma_hat):
        logger.debug("Selection fell back to plain DML")
        return RepetitionRecord(beta_dml=beta_dml, sigma2_dml=sigma2_dml, beta_reg=beta_dml,
                                sigma2_reg=sigma2_dml, gamma_hat=gamma_hat, gamma_prime=gamma_hat,
                                fallback=True, seed=seed, path=tuple(path))

    gamma_prime = a_multiplier(N) * gamma_hat
    b = regdml_estimate(moments, gamma_prime, assembly)
    sigma2_reg = regdml_variance(moments, gamma_prime, b)
    return RepetitionRecord(beta_dml=beta_dml, sigma2_dml=sigma2_dml, beta_reg=float(b[0]),
                            sigma2_reg=float(sigma2_reg[0, 0]), gamma_hat=gamma_hat,
                            gamma_prime=gamma_prime, fallback=False, seed=seed, path=tuple(path))


def _spawn_key(rng: np.random.Generator) -> tuple[int, ...]:
    seed_seq = getattr(rng.bit_generator, "seed_seq", None)
    return tuple(getattr(seed_seq, "spawn_key", ()))


def regsdml_single_split(data: Dataset, K: int, spec: RegressorSpec, grid: GammaGrid,
                         rng: np.random.Generator, assembly: Assembly = Assembly.DML2,
                         threads: int = 1) -> RepetitionRecord:
    if data.d != 1:
        raise InvalidArgumentError("regsDML is only defined for a single regressor (d=1)")
    folds = crossfit_once(data, K, spec, rng, threads=threads)
    return regularized_record(folds, grid, data.N, assembly, seed=_spawn_key(rng))


class AggregatedEstimates(NamedTuple):
    beta_med: float
    sigma2_med: float
    beta_reg_med: float
    sigma2_reg_med: float
    gamma_prime_med: float


def aggregate_repetitions(records: Sequence[RepetitionRecord]) -> AggregatedEstimates:
    if len(records) == 0:
        raise InvalidArgumentError("at least one repetition is required")
    beta, sigma2 = median_aggregate([r.beta_dml for r in records], [r.sigma2_dml for r in records])
    beta_reg, sigma2_reg = median_aggregate([r.beta_reg for r in records], [r.sigma2_reg for r in records])
    gamma_prime = float(np.median([r.gamma_prime for r in records]))
    return AggregatedEstimates(beta_med=float(beta[0]), sigma2_med=float(sigma2[0, 0]),
                               beta_reg_med=float(beta_reg[0]), sigma2_reg_med=float(sigma2_reg[0, 0]),
                               gamma_prime_med=gamma_prime)


def select_final(beta_med: float, sigma2_med: float, beta_reg_med: float, sigma2_reg_med: float,
                 N: int, level: float, gamma_prime: float | None = None) -> EstimateResult:
    """Keep the regularized candidate only when its variance is strictly smaller."""
    if not (math.isfinite(sigma2_med) and math.isfinite(sigma2_reg_med)):
        raise InvalidArgumentError("both variance medians must be finite")

    if sigma2_reg_med < sigma2_med:
        logger.debug(f"regsDML keeps the regularized estimate (gamma'={gamma_prime})")
        return estimate_result(np.array([beta_reg_med]), np.array([[sigma2_reg_med]]), N, level,
                               Method.REGS_DML, gamma=gamma_prime, selected_regularized=True)
    return estimate_result(np.array([beta_med]), np.array([[sigma2_med]]), N, level,
                           Method.REGS_DML, selected_regularized=False)


def regdml_result(records: Sequence[RepetitionRecord], N: int, level: float) -> EstimateResult:
    aggregated = aggregate_repetitions(records)
    return estimate_result(np.array([aggregated.beta_reg_med]), np.array([[aggregated.sigma2_reg_med]]),
                           N, level, Method.REG_DML, gamma=aggregated.gamma_prime_med)


def regsdml_result(records: Sequence[RepetitionRecord], N: int, level: float) -> EstimateResult:
    aggregated = aggregate_repetitions(records)
    return select_final(*aggregated[:4], N=N, level=level, gamma_prime=aggregated.gamma_prime_med)


def regularized_records(fold_sets: Sequence[Sequence[FoldLike]], grid: GammaGrid, N: int,
                        assembly: Assembly = Assembly.DML2, threads: int = 1) -> list[RepetitionRecord]:
    records = map_ordered(lambda folds: regularized_record(folds, grid, N, assembly), fold_sets,
                          threads=threads)
    fallbacks = sum(r.fallback for r in records)
    logger.info(f"Selected gamma on {len(records)} splits ({fallbacks} fell back to DML)")
    return records


def regsdml_from_fold_sets(fold_sets: Sequence[Sequence[FoldLike]], grid: GammaGrid, N: int,
                           level: float, assembly: Assembly = Assembly.DML2,
                           threads: int = 1) -> EstimateResult:
    return regsdml_result(regularized_records(fold_sets, grid, N, assembly, threads), N, level)
