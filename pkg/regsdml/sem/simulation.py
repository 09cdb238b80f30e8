from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from regsdml.crossfit import crossfit_repetitions
from regsdml.data import EstimateResult
from regsdml.data import Method
from regsdml.errors import InvalidArgumentError
from regsdml.errors import RegsDMLError
from regsdml.estimators import Assembly
from regsdml.estimators import normal_quantile
from regsdml.learner import RegressorSpec
from regsdml.methods import DEFAULT_ESTIMATORS
from regsdml.methods import Estimator
from regsdml.methods import method_key
from regsdml.methods import RunContext
from regsdml.parallel import map_ordered
from regsdml.regularized import GammaGrid
from regsdml.regularized import RepetitionRecord
from regsdml.sem.scenarios import generate
from regsdml.sem.scenarios import ScenarioSpec


logger = logging.getLogger(__name__)

REFERENCE_METHOD = Method.DML.value


@dataclass(frozen=True)
class MethodSummary:
    method: str
    coverage: float
    rejection_rate: float
    ci_length_scaled: tuple[float, ...]
    median_scaled_length: float
    failures: int
    runs_ok: int
    coverage_band_lower: float
    coverage_band_upper: float


@dataclass(frozen=True)
class GammaPathSummary:
    gamma: float
    variance: float
    bias2: float
    objective: float


@dataclass(frozen=True)
class SimulationReport:
    scenario: str
    beta0: float
    N: int
    M: int
    K: int
    S: int
    level: float
    seed: int | None
    methods: dict[str, MethodSummary]
    gamma_path: tuple[GammaPathSummary, ...] = field(default=())

    def method_names(self) -> list[str]:
        return list(self.methods)


@dataclass
class RunOutcome:
    results: dict[str, EstimateResult | None]
    records: list[RepetitionRecord] | None = None


def _coverage_band(coverage: float, runs_ok: int) -> tuple[float, float]:
    if runs_ok == 0 or math.isnan(coverage):
        return math.nan, math.nan
    half = normal_quantile(0.95) * math.sqrt(coverage * (1.0 - coverage) / runs_ok)
    return max(0.0, coverage - half), min(1.0, coverage + half)


def summarize_method(name: str, results: Sequence[EstimateResult | None], beta0: float,
                     reference_length: float) -> MethodSummary:
    ok = [r for r in results if r is not None]
    failures = len(results) - len(ok)
    if not ok:
        return MethodSummary(method=name, coverage=math.nan, rejection_rate=math.nan, ci_length_scaled=(),
                             median_scaled_length=math.nan, failures=failures, runs_ok=0,
                             coverage_band_lower=math.nan, coverage_band_upper=math.nan)

    coverage = float(np.mean([r.covers(beta0) for r in ok]))
    rejection = float(np.mean([not r.covers(0.0) for r in ok]))
    lengths = np.array([float(r.ci_length[0]) for r in ok])
    lower, upper = _coverage_band(coverage, len(ok))
    return MethodSummary(
        method=name,
        coverage=coverage,
        rejection_rate=rejection,
        ci_length_scaled=tuple((lengths / reference_length).tolist()),
        median_scaled_length=float(np.median(lengths)) / reference_length,
        failures=failures,
        runs_ok=len(ok),
        coverage_band_lower=lower,
        coverage_band_upper=upper,
    )


def summarize_gamma_path(records: Sequence[RepetitionRecord]) -> tuple[GammaPathSummary, ...]:
    by_gamma: dict[float, list] = {}
    for record in records:
        for point in record.path:
            by_gamma.setdefault(point.gamma, []).append(point)

    summary = []
    for gamma in sorted(by_gamma):
        points = by_gamma[gamma]
        summary.append(GammaPathSummary(
            gamma=gamma,
            variance=float(np.median([p.variance for p in points])),
            bias2=float(np.median([p.bias2 for p in points])),
            objective=float(np.median([p.objective for p in points])),
        ))
    return tuple(summary)


def run_monte_carlo(spec: ScenarioSpec, N: int, M: int, methods: Sequence[Method | str], K: int, S: int,
                    grid: GammaGrid, learner: RegressorSpec, level: float, rng: np.random.Generator,
                    threads: int = 1, estimators: Mapping[str, Estimator] | None = None,
                    assembly: Assembly = Assembly.DML2, seed: int | None = None) -> SimulationReport:
    """Coverage, rejection rate and scaled CI lengths over M simulated datasets.

    DML is always estimated because it defines the length scale. Runs where
    a method fails are counted per method and left out of its metrics.
    """
    if M < 1:
        raise InvalidArgumentError(f"M must be at least 1, got {M}")
    normal_quantile(level)

    registry = dict(DEFAULT_ESTIMATORS)
    registry.update(estimators or {})
    requested = [method_key(m) for m in methods]
    unknown = [m for m in requested if m not in registry]
    if unknown:
        raise InvalidArgumentError(f"unknown methods: {', '.join(unknown)}")
    names = list(dict.fromkeys([REFERENCE_METHOD, *requested]))

    beta0 = spec.true_beta
    run_rngs = rng.spawn(M)
    progress_step = max(1, M // 10)

    def one_run(m: int) -> RunOutcome:
        data_rng, fit_rng = run_rngs[m].spawn(2)
        try:
            data = generate(spec, N, data_rng)
            fold_sets = crossfit_repetitions(data, K, S, learner, fit_rng)
        except RegsDMLError as e:
            logger.warning(f"Run {m + 1}/{M}: cross-fitting failed ({e}); all methods excluded")
            return RunOutcome(results={name: None for name in names})

        context = RunContext(data=data, fold_sets=fold_sets, grid=grid, level=level, assembly=assembly)
        results: dict[str, EstimateResult | None] = {}
        for name in names:
            try:
                results[name] = registry[name](context)
            except RegsDMLError as e:
                logger.warning(f"Run {m + 1}/{M}: {name} failed and is excluded ({e})")
                results[name] = None

        if (m + 1) % progress_step == 0:
            logger.info(f"Monte Carlo progress: {m + 1}/{M} runs")
        return RunOutcome(results=results, records=context.computed_records())

    outcomes = map_ordered(one_run, range(M), threads=threads)

    reference = [o.results[REFERENCE_METHOD] for o in outcomes if o.results[REFERENCE_METHOD] is not None]
    reference_length = float(np.median([r.ci_length[0] for r in reference])) if reference else math.nan

    summaries = {
        name: summarize_method(name, [o.results[name] for o in outcomes], beta0, reference_length)
        for name in names
    }
    records = [r for o in outcomes if o.records for r in o.records]
    for summary in summaries.values():
        if summary.failures:
            logger.warning(f"{summary.method}: {summary.failures} of {M} runs excluded")

    return SimulationReport(scenario=spec.name.value, beta0=beta0, N=N, M=M, K=K, S=S, level=level,
                            seed=seed, methods=summaries, gamma_path=summarize_gamma_path(records))
