from __future__ import annotations

import logging
from enum import Enum
from typing import Any
from typing import NamedTuple

import numpy as np

from regsdml.crossfit import crossfit_once
from regsdml.data import ResidualFold
from regsdml.errors import InvalidArgumentError
from regsdml.estimators import dml2_estimate
from regsdml.estimators import dml_variance
from regsdml.learner import LearnerKind
from regsdml.learner import RegressorSpec
from regsdml.parallel import map_ordered
from regsdml.sem.scenarios import conditional_means
from regsdml.sem.scenarios import generate
from regsdml.sem.scenarios import ScenarioName
from regsdml.sem.scenarios import ScenarioSpec


logger = logging.getLogger(__name__)

MIN_MC_SIZE = 1000
MAX_STEP = 0.1
DEFAULT_DIRECTION = (1.0, 1.0, 0.0)


class Score(Enum):
    NEYMAN_PSI = "neyman_psi"
    NAIVE_VARPHI = "naive_varphi"

    @classmethod
    def _missing_(cls, value: object) -> Any:
        aliases = {"psi": cls.NEYMAN_PSI, "neyman": cls.NEYMAN_PSI, "naive": cls.NAIVE_VARPHI,
                   "varphi": cls.NAIVE_VARPHI}
        if isinstance(value, str):
            return aliases.get(value.strip().lower())
        return None


class OrthogonalityDiagnostic(NamedTuple):
    derivative: float
    std_error: float

    @property
    def z_score(self) -> float:
        return abs(self.derivative) / self.std_error if self.std_error > 0 else float("inf")


def _score_values(score: Score, A: np.ndarray, X: np.ndarray, Y: np.ndarray, means: dict[str, np.ndarray],
                  direction: tuple[float, float, float], r: float, beta0: float) -> np.ndarray:
    dA, dX, dY = direction
    RA = A - (means["A"] + r * dA)
    RX = X - (means["X"] + r * dX)
    RY = Y - (means["Y"] + r * dY)
    instrument = A if score == Score.NAIVE_VARPHI else RA
    return instrument * (RY - RX * beta0)


def orthogonality_diagnostic(score: Score | str, scenario: ScenarioSpec, mc_size: int, step: float,
                             rng: np.random.Generator,
                             direction: tuple[float, float, float] = DEFAULT_DIRECTION) -> OrthogonalityDiagnostic:
    """Central finite-difference derivative of the mean score along a nuisance path.

    The nuisances move from the true conditional means by ``r * direction``;
    both evaluations reuse one simulated sample.
    """
    score = Score(score)
    if mc_size < MIN_MC_SIZE:
        raise InvalidArgumentError(f"mc_size must be at least {MIN_MC_SIZE}, got {mc_size}")
    if not 0.0 < step <= MAX_STEP:
        raise InvalidArgumentError(f"step must lie in (0, {MAX_STEP}], got {step}")
    if len(direction) != 3:
        raise InvalidArgumentError("direction needs one entry for each of A, X and Y")

    data = generate(scenario, mc_size, rng)
    if data.q != 1 or data.d != 1:
        raise InvalidArgumentError("the orthogonality diagnostic needs a scalar instrument and regressor")

    means = {role: conditional_means(scenario, role, data.W)[:, 0] for role in ("A", "X", "Y")}
    beta0 = scenario.true_beta
    A, X = data.A[:, 0], data.X[:, 0]
    plus = _score_values(score, A, X, data.Y, means, direction, step, beta0)
    minus = _score_values(score, A, X, data.Y, means, direction, -step, beta0)
    differences = (plus - minus) / (2.0 * step)

    result = OrthogonalityDiagnostic(
        derivative=float(differences.mean()),
        std_error=float(differences.std(ddof=1) / np.sqrt(mc_size)),
    )
    logger.info(f"{score.value} on {scenario.name.value}: derivative {result.derivative:.4g} "
                f"(MC s.e. {result.std_error:.3g})")
    return result


class NaiveInstrumentDiagnostic(NamedTuple):
    naive: float
    proper: float


class _RunEstimates(NamedTuple):
    naive: float
    proper: float
    naive_se: float
    proper_se: float


def naive_instrument_folds(folds: list[ResidualFold], A: np.ndarray) -> list[ResidualFold]:
    """Copies of ``folds`` with the raw instrument in place of its residual."""
    return [ResidualFold(RA=A[f.indices], RX=f.RX, RY=f.RY, fold_index=f.fold_index, indices=f.indices)
            for f in folds]


def naive_instrument_diagnostic(N: int, M: int, K: int, rng: np.random.Generator,
                                learner: RegressorSpec | None = None, beta0: float | None = None,
                                threads: int = 1) -> NaiveInstrumentDiagnostic:
    """Mean standardized bias of DML using the raw instrument versus its residual.

    Biases are divided by the spread of the estimates across runs; with a
    single run the run's own standard error is used instead.
    """
    if M < 1:
        raise InvalidArgumentError(f"M must be at least 1, got {M}")
    learner = learner or RegressorSpec(kind=LearnerKind.FOREST)
    scenario = ScenarioSpec(ScenarioName.NAIVE_INSTRUMENT_SEM)
    if beta0 is not None:
        scenario = scenario.with_beta0(beta0)
    truth = scenario.true_beta
    run_rngs = rng.spawn(M)

    def one_run(m: int) -> _RunEstimates:
        data_rng, fit_rng = run_rngs[m].spawn(2)
        data = generate(scenario, N, data_rng)
        folds = crossfit_once(data, K, learner, fit_rng)
        naive_folds = naive_instrument_folds(folds, data.A)
        proper = dml2_estimate(folds)
        naive = dml2_estimate(naive_folds)
        return _RunEstimates(
            naive=float(naive[0]),
            proper=float(proper[0]),
            naive_se=float(np.sqrt(dml_variance(naive_folds, naive)[0, 0] / N)),
            proper_se=float(np.sqrt(dml_variance(folds, proper)[0, 0] / N)),
        )

    runs = map_ordered(one_run, range(M), threads=threads)
    naive = np.array([r.naive for r in runs])
    proper = np.array([r.proper for r in runs])
    if M > 1:
        naive_scale, proper_scale = naive.std(ddof=1), proper.std(ddof=1)
    else:
        naive_scale, proper_scale = runs[0].naive_se, runs[0].proper_se

    result = NaiveInstrumentDiagnostic(
        naive=float(np.mean((naive - truth) / naive_scale)),
        proper=float(np.mean((proper - truth) / proper_scale)),
    )
    logger.info(f"Standardized bias over {M} runs: naive {result.naive:.3f}, proper {result.proper:.3f}")
    return result
