from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property

from regsdml.data import Dataset
from regsdml.data import EstimateResult
from regsdml.data import Method
from regsdml.data import ResidualFold
from regsdml.estimators import Assembly
from regsdml.estimators import dml_from_fold_sets
from regsdml.kclass import kclass_from_fold_sets
from regsdml.regularized import GammaGrid
from regsdml.regularized import regdml_result
from regsdml.regularized import regsdml_result
from regsdml.regularized import regularized_records
from regsdml.regularized import RepetitionRecord


@dataclass
class RunContext:
    """Cross-fitted sample splits shared by every estimator of one dataset."""
    data: Dataset
    fold_sets: list[list[ResidualFold]]
    grid: GammaGrid
    level: float
    assembly: Assembly = Assembly.DML2
    threads: int = 1

    @property
    def N(self) -> int:
        return self.data.N

    @cached_property
    def records(self) -> list[RepetitionRecord]:
        return regularized_records(self.fold_sets, self.grid, self.N, self.assembly, self.threads)

    def computed_records(self) -> list[RepetitionRecord] | None:
        return self.__dict__.get("records")


Estimator = Callable[[RunContext], EstimateResult]


def _kclass(method: Method) -> Estimator:
    return lambda ctx: kclass_from_fold_sets(ctx.fold_sets, method, ctx.N, ctx.level, ctx.assembly)


DEFAULT_ESTIMATORS: dict[str, Estimator] = {
    Method.DML.value: lambda ctx: dml_from_fold_sets(ctx.fold_sets, ctx.N, ctx.level, Assembly.DML2),
    Method.DML1.value: lambda ctx: dml_from_fold_sets(ctx.fold_sets, ctx.N, ctx.level, Assembly.DML1),
    Method.REG_DML.value: lambda ctx: regdml_result(ctx.records, ctx.N, ctx.level),
    Method.REGS_DML.value: lambda ctx: regsdml_result(ctx.records, ctx.N, ctx.level),
    Method.LIML.value: _kclass(Method.LIML),
    Method.FULLER1.value: _kclass(Method.FULLER1),
    Method.FULLER4.value: _kclass(Method.FULLER4),
}


def method_key(method: Method | str) -> str:
    if isinstance(method, Method):
        return method.value
    try:
        return Method(method).value
    except ValueError:
        return str(method)
