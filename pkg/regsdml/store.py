from __future__ import annotations

import abc
import json
import logging
import math
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any
from typing import Union

import numpy as np
import pandas as pd

from regsdml.constants import NUMBER_SIGNIFICANT_DIGITS
from regsdml.data import Dataset
from regsdml.data import EstimateResult
from regsdml.errors import DatasetError
from regsdml.errors import InvalidArgumentError
from regsdml.errors import ReportError
from regsdml.sem.simulation import SimulationReport


logger = logging.getLogger(__name__)

FIT_COLUMNS = ["method", "estimate", "std_error", "ci_lower", "ci_upper", "gamma_prime"]
SIMULATION_COLUMNS = ["method", "metric", "value"]
SIMULATION_METRICS = [
    "coverage",
    "rejection_rate",
    "median_scaled_length",
    "coverage_band_lower",
    "coverage_band_upper",
    "runs_ok",
    "failures",
]

Report = Union[EstimateResult, Sequence[EstimateResult], SimulationReport, Mapping[str, float]]


class ReportFormat(Enum):
    CSV = "csv"
    JSON = "json"

    @classmethod
    def _missing_(cls, value: object) -> Any:
        if isinstance(value, str):
            for member in cls:
                if member.value == value.strip().lower():
                    return member
        return None

    @classmethod
    def from_path(cls, path: Path) -> ReportFormat:
        return cls.JSON if path.suffix.lower() == ".json" else cls.CSV


def format_number(value: float | int | None) -> str:
    """At least nine significant digits in fixed notation; ``inf``/``nan`` spelled out."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value == 0.0:
        return f"{0.0:.{NUMBER_SIGNIFICANT_DIGITS}f}"
    decimals = max(NUMBER_SIGNIFICANT_DIGITS, NUMBER_SIGNIFICANT_DIGITS - 1 - math.floor(math.log10(abs(value))))
    return f"{value:.{decimals}f}"


def json_number(value: float | int | None) -> float | int | str | None:
    if value is None or isinstance(value, (int, np.integer)):
        return None if value is None else int(value)
    value = float(value)
    if not math.isfinite(value):
        return format_number(value)
    return float(format_number(value))


@dataclass(frozen=True)
class Roles:
    A: tuple[str, ...] = ("A",)
    X: tuple[str, ...] = ("X",)
    W: tuple[str, ...] = ("W",)
    Y: str = "Y"

    def __post_init__(self) -> None:
        for name in ("A", "X", "W"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise InvalidArgumentError(f"role {name} needs at least one column")
        columns = self.columns()
        duplicated = sorted({c for c in columns if columns.count(c) > 1})
        if duplicated:
            raise InvalidArgumentError(f"columns assigned to more than one role: {', '.join(duplicated)}")

    def columns(self) -> list[str]:
        return [*self.A, *self.X, *self.W, self.Y]


class Store(abc.ABC):

    @abc.abstractmethod
    def load(self) -> Any:
        pass

    @abc.abstractmethod
    def save(self, data: Any) -> None:
        pass

    @abc.abstractmethod
    def is_empty(self) -> bool:
        pass


class LocalStore(Store):

    def __init__(self, filepath: Path | str) -> None:
        self.__filepath = Path(filepath)

    @property
    def filepath(self) -> Path:
        return self.__filepath

    def is_empty(self) -> bool:
        return not self.filepath.exists() or self.filepath.stat().st_size == 0

    def _write_text(self, path: Path, text: str) -> None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="") as fs:
                fs.write(text)
        except OSError as e:
            raise ReportError(f"could not write {path}: {e}") from e


class CsvDatasetStore(LocalStore):

    def __init__(self, filepath: Path | str, roles: Roles | None = None) -> None:
        super().__init__(filepath)
        self.__roles = roles or Roles()

    @property
    def roles(self) -> Roles:
        return self.__roles

    def load(self) -> Dataset:
        if not self.filepath.exists():
            raise DatasetError(f"{self.filepath} does not exist")
        if self.is_empty():
            raise DatasetError(f"{self.filepath} is empty")
        try:
            frame = pd.read_csv(self.filepath, dtype=str, keep_default_na=False, encoding="utf-8-sig")
        except pd.errors.EmptyDataError:
            raise DatasetError(f"{self.filepath} is empty") from None
        if frame.empty:
            raise DatasetError(f"{self.filepath} has a header but no rows")

        frame.columns = [str(c).strip() for c in frame.columns]
        missing = [c for c in self.roles.columns() if c not in frame.columns]
        if missing:
            raise DatasetError(f"{self.filepath} is missing column(s): {', '.join(missing)}")

        numeric = {}
        for column in self.roles.columns():
            raw = frame[column].str.strip()
            values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
            bad = np.flatnonzero(~np.isfinite(values))
            if bad.size:
                row = int(bad[0])
                raise DatasetError(
                    f"{self.filepath}: non-numeric value '{frame[column].iloc[row]}' "
                    f"in row {row + 1}, column '{column}'")
            numeric[column] = values

        roles = self.roles
        dataset = Dataset(
            A=np.column_stack([numeric[c] for c in roles.A]),
            X=np.column_stack([numeric[c] for c in roles.X]),
            W=np.column_stack([numeric[c] for c in roles.W]),
            Y=numeric[roles.Y],
            a_names=roles.A, x_names=roles.X, w_names=roles.W, y_name=roles.Y,
        )
        logger.info(f"Loaded {dataset.N} rows from {self.filepath} (q={dataset.q}, d={dataset.d}, v={dataset.v})")
        return dataset

    def save(self, data: Dataset) -> None:
        columns = {}
        for names, block in ((data.a_names, data.A), (data.x_names, data.X), (data.w_names, data.W)):
            for j, name in enumerate(names):
                columns[name] = [format_number(x) for x in block[:, j]]
        columns[data.y_name] = [format_number(x) for x in data.Y]
        self._write_text(self.filepath, pd.DataFrame(columns).to_csv(index=False, lineterminator="\n"))


def load_dataset_csv(path: Path | str, roles: Roles | None = None) -> Dataset:
    return CsvDatasetStore(path, roles).load()


def _fit_rows(results: Sequence[EstimateResult]) -> list[dict[str, Any]]:
    rows = []
    for result in results:
        record = result.to_dict()
        for j in range(result.d):
            rows.append({
                "method": record["method"] if result.d == 1 else f"{record['method']}:{j + 1}",
                **{column: float(record[column][j]) for column in FIT_COLUMNS[1:5]},
                "gamma_prime": record["gamma_prime"],
            })
    return rows


def _simulation_rows(report: SimulationReport) -> list[tuple[str, str, Any]]:
    rows: list[tuple[str, str, Any]] = [
        ("settings", "scenario", report.scenario),
        ("settings", "beta0", report.beta0),
        ("settings", "N", report.N),
        ("settings", "M", report.M),
        ("settings", "K", report.K),
        ("settings", "S", report.S),
        ("settings", "level", report.level),
        ("settings", "seed", report.seed),
    ]
    for name, summary in report.methods.items():
        rows.extend((name, metric, getattr(summary, metric)) for metric in SIMULATION_METRICS)
    return rows


def _cell(value: Any) -> str:
    return value if isinstance(value, str) else format_number(value)


class ReportStore(LocalStore):
    """Writes fit, simulation and diagnostic reports as CSV or JSON.

    Simulation reports get two companion CSV files next to the main one:
    ``<stem>.lengths.csv`` with every run's scaled CI length and, when a
    regularized method ran, ``<stem>.gamma_path.csv`` with the median
    bias-variance path.
    """

    def __init__(self, filepath: Path | str, report_format: ReportFormat | str | None = None) -> None:
        super().__init__(filepath)
        if report_format is None:
            report_format = ReportFormat.from_path(self.filepath)
        try:
            self.__format = ReportFormat(report_format)
        except ValueError:
            raise InvalidArgumentError(f"unknown report format '{report_format}'") from None

    @property
    def format(self) -> ReportFormat:
        return self.__format

    def companion(self, suffix: str) -> Path:
        return self.filepath.with_name(f"{self.filepath.stem}.{suffix}.csv")

    def save(self, report: Report) -> None:
        if isinstance(report, SimulationReport):
            self._save_simulation(report)
        elif isinstance(report, EstimateResult):
            self._save_fit([report])
        elif isinstance(report, Mapping):
            self._save_metrics(report)
        else:
            self._save_fit(list(report))
        logger.info(f"Report written to {self.filepath}")

    def load(self) -> pd.DataFrame:
        if self.format == ReportFormat.JSON:
            raise InvalidArgumentError("only CSV reports can be loaded back")
        try:
            return pd.read_csv(self.filepath, dtype={"method": str, "metric": str}, keep_default_na=False)
        except (OSError, pd.errors.EmptyDataError) as e:
            raise ReportError(f"could not read {self.filepath}: {e}") from e

    def _save_fit(self, results: Sequence[EstimateResult]) -> None:
        rows = _fit_rows(results)
        if self.format == ReportFormat.JSON:
            payload = [{key: (value if key == "method" else json_number(value)) for key, value in row.items()}
                       for row in rows]
            self._write_json(payload)
            return
        frame = pd.DataFrame([{key: _cell(value) for key, value in row.items()} for row in rows],
                             columns=FIT_COLUMNS)
        self._write_text(self.filepath, frame.to_csv(index=False, lineterminator="\n"))

    def _save_simulation(self, report: SimulationReport) -> None:
        if self.format == ReportFormat.JSON:
            self._write_json({
                "settings": {key: (value if isinstance(value, str) else json_number(value))
                             for _, key, value in _simulation_rows(report)[:8]},
                "methods": {
                    name: {
                        **{metric: json_number(getattr(summary, metric)) for metric in SIMULATION_METRICS},
                        "ci_length_scaled": [json_number(x) for x in summary.ci_length_scaled],
                    }
                    for name, summary in report.methods.items()
                },
                "gamma_path": [
                    {"gamma": json_number(p.gamma), "variance": json_number(p.variance),
                     "bias2": json_number(p.bias2), "objective": json_number(p.objective)}
                    for p in report.gamma_path
                ],
            })
            return

        frame = pd.DataFrame([(m, k, _cell(v)) for m, k, v in _simulation_rows(report)],
                             columns=SIMULATION_COLUMNS)
        self._write_text(self.filepath, frame.to_csv(index=False, lineterminator="\n"))

        lengths = pd.DataFrame(
            [(name, str(run + 1), format_number(x))
             for name, summary in report.methods.items()
             for run, x in enumerate(summary.ci_length_scaled)],
            columns=["method", "run", "scaled_length"])
        self._write_text(self.companion("lengths"), lengths.to_csv(index=False, lineterminator="\n"))

        if report.gamma_path:
            path = pd.DataFrame(
                [(format_number(p.gamma), format_number(p.variance), format_number(p.bias2),
                  format_number(p.objective)) for p in report.gamma_path],
                columns=["gamma", "variance", "bias2", "objective"])
            self._write_text(self.companion("gamma_path"), path.to_csv(index=False, lineterminator="\n"))

    def _save_metrics(self, metrics: Mapping[str, float]) -> None:
        if self.format == ReportFormat.JSON:
            self._write_json({key: json_number(value) for key, value in metrics.items()})
            return
        frame = pd.DataFrame([(key, format_number(value)) for key, value in metrics.items()],
                             columns=["metric", "value"])
        self._write_text(self.filepath, frame.to_csv(index=False, lineterminator="\n"))

    def _write_json(self, payload: Any) -> None:
        self._write_text(self.filepath, json.dumps(payload, indent=4) + "\n")


def emit_report(result: Report, path: Path | str, report_format: ReportFormat | str | None = None) -> None:
    ReportStore(path, report_format).save(result)
