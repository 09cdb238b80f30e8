from __future__ import annotations


class UsageError(Exception):
    pass


class RegsDMLError(Exception):
    pass


class InvalidArgumentError(RegsDMLError, ValueError):
    pass


class SingularSystemError(RegsDMLError, ArithmeticError):

    def __init__(self, message: str, condition: float, fold: int | None = None) -> None:
        self.condition = condition
        self.fold = fold
        where = f" in fold {fold + 1}" if fold is not None else ""
        super().__init__(f"{message}{where} (condition={condition:.3e})")


class SelectionFailedError(RegsDMLError):
    pass


class DatasetError(RegsDMLError):
    pass


class ReportError(RegsDMLError):
    pass
