from __future__ import annotations

import logging
from collections.abc import Callable
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any

from dotenv import dotenv_values

from regsdml import settings
from regsdml.constants import DEFAULT_K
from regsdml.constants import DEFAULT_LEVEL
from regsdml.constants import DEFAULT_S
from regsdml.data import Method
from regsdml.errors import InvalidArgumentError
from regsdml.errors import UsageError
from regsdml.learner import LearnerKind
from regsdml.learner import RegressorSpec
from regsdml.regularized import GammaGrid
from regsdml.sem.scenarios import ScenarioName
from regsdml.sem.scenarios import ScenarioOracle
from regsdml.sem.scenarios import ScenarioSpec
from regsdml.store import ReportFormat
from regsdml.store import Roles


logger = logging.getLogger(__name__)

COMMANDS = ("fit", "simulate", "diagnose", "generate")
DIAGNOSTICS = ("orthogonality", "naive-instrument")

DEFAULTS: dict[str, str] = {
    "K": str(DEFAULT_K),
    "S": str(DEFAULT_S),
    "M": "100",
    "N": "200",
    "level": str(DEFAULT_LEVEL),
    "methods": "DML,regsDML",
    "gamma_grid": "default",
    "learner.kind": "spline",
    "learner.trees": "500",
    "learner.min_node": "5",
    "learner.mtry": "auto",
    "learner.df": "auto",
    "learner.threads": "1",
    "diagnose.which": "orthogonality",
    "diagnose.mc_size": "100000",
    "diagnose.step": "0.01",
}

KNOWN_KEYS = frozenset({
    "data", "out", "format", "scenario", "N", "M", "K", "S", "seed", "level", "methods", "threads",
    "gamma_grid", "roles.A", "roles.X", "roles.W", "roles.Y", "learner.kind", "learner.trees",
    "learner.min_node", "learner.mtry", "learner.df", "learner.threads", "scenario.beta0", "scenario.chi",
    "scenario.kappa_noise", "scenario.alpha_link", "scenario.w_scale", "diagnose.which",
    "diagnose.mc_size", "diagnose.step",
})


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    input_path: Path | None = None
    output_path: Path | None = None
    report_format: ReportFormat = ReportFormat.CSV
    roles: Roles = field(default_factory=Roles)
    K: int = DEFAULT_K
    S: int = DEFAULT_S
    M: int = 100
    N: int = 200
    level: float = DEFAULT_LEVEL
    methods: tuple[Method, ...] = (Method.DML, Method.REGS_DML)
    threads: int = 1
    grid: GammaGrid = field(default_factory=GammaGrid.default)
    learner: RegressorSpec = field(default_factory=RegressorSpec)
    scenario: ScenarioSpec | None = None
    diagnose_which: str = "orthogonality"
    mc_size: int = 100000
    step: float = 0.01


def read_config_file(path: Path | str) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    values = {key: value for key, value in dotenv_values(path).items() if value is not None}
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise UsageError(f"unknown config key(s) in {path}: {', '.join(unknown)}")
    return values


def _convert(values: Mapping[str, str], key: str, kind: Callable[[str], Any]) -> Any:
    text = values.get(key)
    if text is None or text == "":
        return None
    try:
        return kind(text.strip())
    except (ValueError, InvalidArgumentError) as e:
        raise UsageError(f"invalid value '{text}' for {key}: {e}") from None


def _int_or_auto(text: str) -> int | str:
    return "auto" if text.lower() == "auto" else int(text)


def _names(text: str) -> tuple[str, ...]:
    return tuple(name.strip() for name in text.split(",") if name.strip())


def _methods(text: str) -> tuple[Method, ...]:
    return tuple(Method(name) for name in _names(text))


def build_config(command: str, flags: Mapping[str, Any], config_path: Path | str | None = None) -> RunConfig:
    """Merge built-in defaults, the config file and command-line flags, in that order."""
    if command not in COMMANDS:
        raise UsageError(f"unknown command '{command}'")

    values = dict(DEFAULTS)
    explicit: set[str] = set()
    if config_path is not None:
        from_file = read_config_file(config_path)
        values.update(from_file)
        explicit.update(from_file)
    for key, value in flags.items():
        if value is not None:
            values[key] = str(value)
            explicit.add(key)

    seed = _convert(values, "seed", int)
    if seed is None:
        if command in ("simulate", "generate"):
            raise UsageError(f"{command} requires --seed")
        seed = 0

    scenario = None
    scenario_name = values.get("scenario")
    if command == "diagnose" and not scenario_name:
        scenario_name = ScenarioName.LINEAR_GAUSSIAN_ORACLE.value
    if scenario_name:
        try:
            scenario = ScenarioSpec(
                name=scenario_name,
                beta0=_convert(values, "scenario.beta0", float),
                chi=_convert(values, "scenario.chi", float),
                kappa_noise=_convert(values, "scenario.kappa_noise", float),
                alpha_link=_convert(values, "scenario.alpha_link", float),
                w_scale=_convert(values, "scenario.w_scale", float),
            )
        except InvalidArgumentError as e:
            raise UsageError(str(e)) from None
    elif command in ("simulate", "generate"):
        raise UsageError(f"{command} requires --scenario")

    which = values["diagnose.which"]
    if which not in DIAGNOSTICS:
        raise UsageError(f"--which must be one of {', '.join(DIAGNOSTICS)}")

    kind = values["learner.kind"]
    if command == "diagnose" and which == "naive-instrument" and "learner.kind" not in explicit:
        kind = LearnerKind.FOREST.value
    learner = _learner(values, kind, scenario, command)

    input_path = values.get("data")
    output_path = values.get("out")
    if command == "fit" and not input_path:
        raise UsageError("fit requires --data")
    if command in ("fit", "simulate", "generate") and not output_path:
        raise UsageError(f"{command} requires --out")

    output_path = Path(output_path) if output_path else None
    report_format = _convert(values, "format", ReportFormat)
    if report_format is None:
        report_format = ReportFormat.from_path(output_path) if output_path else ReportFormat.CSV

    threads = _convert(values, "threads", int) or settings.REGSDML_THREADS
    config = RunConfig(
        command=command,
        seed=seed,
        input_path=Path(input_path) if input_path else None,
        output_path=output_path,
        report_format=report_format,
        roles=_roles(values),
        K=_convert(values, "K", int),
        S=_convert(values, "S", int),
        M=_convert(values, "M", int),
        N=_convert(values, "N", int),
        level=_convert(values, "level", float),
        methods=_convert(values, "methods", _methods),
        threads=max(1, threads),
        grid=_convert(values, "gamma_grid", GammaGrid.parse),
        learner=learner,
        scenario=scenario,
        diagnose_which=which,
        mc_size=_convert(values, "diagnose.mc_size", int),
        step=_convert(values, "diagnose.step", float),
    )
    _validate(config)
    logger.debug(f"Run configuration: {config}")
    return config


def _learner(values: Mapping[str, str], kind: str, scenario: ScenarioSpec | None, command: str) -> RegressorSpec:
    try:
        learner_kind = LearnerKind(kind)
    except ValueError:
        raise UsageError(f"unknown learner '{kind}'") from None

    oracle = None
    if learner_kind == LearnerKind.ORACLE:
        if scenario is None or command == "fit":
            raise UsageError("the oracle learner is only available for simulated scenarios")
        try:
            oracle = ScenarioOracle(scenario)
        except InvalidArgumentError as e:
            raise UsageError(str(e)) from None

    try:
        return RegressorSpec(
            kind=learner_kind,
            forest_trees=_convert(values, "learner.trees", int),
            forest_min_node=_convert(values, "learner.min_node", int),
            forest_mtry=_convert(values, "learner.mtry", _int_or_auto),
            spline_df=_convert(values, "learner.df", _int_or_auto),
            oracle=oracle,
            threads=_convert(values, "learner.threads", int),
        )
    except InvalidArgumentError as e:
        raise UsageError(str(e)) from None


def _roles(values: Mapping[str, str]) -> Roles:
    defaults = Roles()
    try:
        return Roles(
            A=_names(values.get("roles.A", "")) or defaults.A,
            X=_names(values.get("roles.X", "")) or defaults.X,
            W=_names(values.get("roles.W", "")) or defaults.W,
            Y=values.get("roles.Y", "").strip() or defaults.Y,
        )
    except InvalidArgumentError as e:
        raise UsageError(str(e)) from None


def _validate(config: RunConfig) -> None:
    if not 0.0 < config.level < 1.0:
        raise UsageError(f"level must lie in (0, 1), got {config.level}")
    for name in ("K", "S", "M", "N"):
        if getattr(config, name) < 1:
            raise UsageError(f"{name} must be at least 1, got {getattr(config, name)}")
    if not config.methods:
        raise UsageError("at least one method is required")
