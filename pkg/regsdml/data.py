from __future__ import annotations

import logging
from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from typing import Any

import numpy as np

from regsdml.constants import SYMMETRY_TOLERANCE
from regsdml.errors import InvalidArgumentError


logger = logging.getLogger(__name__)


class Method(Enum):
    DML = "DML"
    DML1 = "DML1"
    REG_DML = "regDML"
    REGS_DML = "regsDML"
    LIML = "LIML"
    FULLER1 = "Fuller1"
    FULLER4 = "Fuller4"

    @classmethod
    def _missing_(cls, value: object) -> Any:
        if not isinstance(value, str):
            return None
        text = value.strip().lower()
        if text == "dml2":
            return cls.DML
        for member in cls:
            if member.value.lower() == text:
                return member
        return None

    def is_kclass(self) -> bool:
        return self in (Method.LIML, Method.FULLER1, Method.FULLER4)

    def is_regularized(self) -> bool:
        return self in (Method.REG_DML, Method.REGS_DML)


def _as_matrix(name: str, values: Any) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a matrix, got {array.ndim} dimensions")
    return array


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    A: np.ndarray
    X: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    a_names: tuple[str, ...] = ()
    x_names: tuple[str, ...] = ()
    w_names: tuple[str, ...] = ()
    y_name: str = "Y"

    def __post_init__(self) -> None:
        A = _as_matrix("A", self.A)
        X = _as_matrix("X", self.X)
        W = _as_matrix("W", self.W)
        Y = np.array(self.Y, dtype=float)
        if Y.ndim == 2 and Y.shape[1] == 1:
            Y = Y[:, 0]
        if Y.ndim != 1:
            raise InvalidArgumentError("Y must be a vector")

        rows = {A.shape[0], X.shape[0], W.shape[0], Y.shape[0]}
        if len(rows) != 1:
            raise InvalidArgumentError(f"A, X, W and Y must have the same row count, got {sorted(rows)}")
        if Y.shape[0] < 1:
            raise InvalidArgumentError("dataset must contain at least one row")
        if X.shape[1] < 1 or W.shape[1] < 1:
            raise InvalidArgumentError("X and W need at least one column")
        if A.shape[1] < X.shape[1]:
            raise InvalidArgumentError(
                f"need at least as many instruments as regressors (q={A.shape[1]}, d={X.shape[1]})")
        for name, block in (("A", A), ("X", X), ("W", W), ("Y", Y)):
            if not np.all(np.isfinite(block)):
                raise InvalidArgumentError(f"{name} contains non-finite entries")

        object.__setattr__(self, "A", _freeze(A))
        object.__setattr__(self, "X", _freeze(X))
        object.__setattr__(self, "W", _freeze(W))
        object.__setattr__(self, "Y", _freeze(Y))
        object.__setattr__(self, "a_names", tuple(self.a_names) or _default_names("A", A.shape[1]))
        object.__setattr__(self, "x_names", tuple(self.x_names) or _default_names("X", X.shape[1]))
        object.__setattr__(self, "w_names", tuple(self.w_names) or _default_names("W", W.shape[1]))

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def q(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def v(self) -> int:
        return self.W.shape[1]

    def subset(self, indices: np.ndarray) -> Dataset:
        return Dataset(A=self.A[indices], X=self.X[indices], W=self.W[indices], Y=self.Y[indices],
                       a_names=self.a_names, x_names=self.x_names, w_names=self.w_names,
                       y_name=self.y_name)


def _default_names(prefix: str, count: int) -> tuple[str, ...]:
    if count == 1:
        return (prefix,)
    return tuple(f"{prefix}{j + 1}" for j in range(count))


@dataclass(frozen=True)
class FoldPartition:
    folds: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        folds = tuple(_freeze(np.sort(np.asarray(f, dtype=np.intp))) for f in self.folds)
        if not folds:
            raise InvalidArgumentError("a partition needs at least one fold")
        merged = np.sort(np.concatenate(folds))
        if not np.array_equal(merged, np.arange(merged.size)):
            raise InvalidArgumentError("folds must be disjoint and cover 0..N-1")
        sizes = [f.size for f in folds]
        if max(sizes) - min(sizes) > 1:
            raise InvalidArgumentError(f"fold sizes differ by more than one: {sizes}")
        object.__setattr__(self, "folds", folds)

    @property
    def K(self) -> int:
        return len(self.folds)

    @property
    def N(self) -> int:
        return sum(f.size for f in self.folds)

    @property
    def sizes(self) -> list[int]:
        return [f.size for f in self.folds]

    def complement(self, k: int) -> np.ndarray:
        """Training rows for fold ``k``. With K=1 the fold is its own complement."""
        if self.K == 1:
            return self.folds[0]
        return np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != k]))


def partition_folds(N: int, K: int, rng: np.random.Generator) -> FoldPartition:
    if K < 1:
        raise InvalidArgumentError(f"K must be at least 1, got {K}")
    if K > N:
        raise InvalidArgumentError(f"K={K} exceeds the number of observations N={N}")

    permutation = rng.permutation(N)
    partition = FoldPartition(tuple(np.array_split(permutation, K)))
    logger.debug(f"Partitioned {N} rows into {K} folds of sizes {partition.sizes}")
    return partition


@dataclass(frozen=True)
class ResidualFold:
    RA: np.ndarray
    RX: np.ndarray
    RY: np.ndarray
    fold_index: int = 0
    indices: np.ndarray | None = None

    def __post_init__(self) -> None:
        RA = _as_matrix("RA", self.RA)
        RX = _as_matrix("RX", self.RX)
        RY = np.array(self.RY, dtype=float).reshape(-1)
        if not RA.shape[0] == RX.shape[0] == RY.shape[0]:
            raise InvalidArgumentError(
                f"residual blocks of fold {self.fold_index + 1} have different row counts")
        for name, block in (("RA", RA), ("RX", RX), ("RY", RY)):
            if not np.all(np.isfinite(block)):
                raise InvalidArgumentError(f"{name} of fold {self.fold_index + 1} is not finite")
        object.__setattr__(self, "RA", _freeze(RA))
        object.__setattr__(self, "RX", _freeze(RX))
        object.__setattr__(self, "RY", _freeze(RY))

    @property
    def n(self) -> int:
        return self.RY.shape[0]

    @property
    def q(self) -> int:
        return self.RA.shape[1]

    @property
    def d(self) -> int:
        return self.RX.shape[1]


@dataclass(frozen=True)
class EstimateResult:
    beta: np.ndarray
    sigma2: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    method: Method
    n_obs: int
    gamma: float | None = None
    # regsDML only: whether the regularized candidate was chosen
    selected_regularized: bool | None = None
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        beta = np.atleast_1d(np.array(self.beta, dtype=float))
        sigma2 = np.atleast_2d(np.array(self.sigma2, dtype=float))
        lower = np.atleast_1d(np.array(self.ci_lower, dtype=float))
        upper = np.atleast_1d(np.array(self.ci_upper, dtype=float))
        d = beta.shape[0]
        if sigma2.shape != (d, d) or lower.shape != (d,) or upper.shape != (d,):
            raise InvalidArgumentError("inconsistent estimate dimensions")
        if self.gamma is not None and not self.gamma >= 0:
            raise InvalidArgumentError(f"gamma must be non-negative, got {self.gamma}")

        if np.all(np.isfinite(sigma2)):
            scale = 1.0 + float(np.max(np.abs(sigma2)))
            if np.max(np.abs(sigma2 - sigma2.T)) > SYMMETRY_TOLERANCE * scale:
                raise InvalidArgumentError("sigma2 is not symmetric")
            if np.min(np.linalg.eigvalsh(sigma2)) < -SYMMETRY_TOLERANCE * scale:
                raise InvalidArgumentError("sigma2 is not positive semi-definite")

        slack = SYMMETRY_TOLERANCE * (1.0 + np.abs(beta))
        if np.any(lower > beta + slack) or np.any(upper < beta - slack):
            raise InvalidArgumentError("confidence interval does not contain the estimate")

        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "ci_lower", lower)
        object.__setattr__(self, "ci_upper", upper)

    @property
    def d(self) -> int:
        return self.beta.shape[0]

    @property
    def variance(self) -> np.ndarray:
        return self.sigma2 / self.n_obs

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.variance), 0.0, None))

    @property
    def ci_length(self) -> np.ndarray:
        return self.ci_upper - self.ci_lower

    def covers(self, value: float, coordinate: int = 0) -> bool:
        return bool(self.ci_lower[coordinate] <= value <= self.ci_upper[coordinate])

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method.value,
            "estimate": self.beta.tolist(),
            "std_error": self.std_error.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "gamma_prime": self.gamma,
            "n_obs": self.n_obs,
        }
